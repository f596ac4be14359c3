"""Command-line harness: ``synth``, ``params``, ``train`` and ``sweep``.

Experiments are described by a flat ``key = value`` file; ``#`` starts a
comment. Every output is a plain CSV/text file reproducible from the config.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import fed, gwdata, rnn
from .errors import ConfigurationError, FederationError

log = logging.getLogger("fedqt")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "qtlstm"
    rounds: int = 100
    clients: int = 4
    local_epochs: int = 1
    optimizer: str = "adam"
    lr: float = 0.01
    batch_size: int = 8
    seed: int = 0
    workers: int = 1
    qt_layers: int = 10
    hidden_size: int = 20
    qlstm_hidden: int = 4
    qlstm_layers: int = 10
    lookback: int = 8
    setting: int = 1
    samples: int = 300
    series_csv: str = ""
    split: str = "2/3"
    out: str = "runs/default"

    def fed_config(self) -> fed.FedConfig:
        return fed.FedConfig(self.rounds, self.clients, self.local_epochs, self.optimizer, self.lr,
                             self.batch_size, self.seed, self.workers)

    def make_model(self):
        return rnn.make_model(self.model, hidden_size=self.hidden_size, lookback=self.lookback,
                              qt_layers=self.qt_layers, qlstm_layers=self.qlstm_layers,
                              qlstm_hidden=self.qlstm_hidden)

    def split_fraction(self) -> Fraction:
        try:
            frac = Fraction(self.split)
        except (ValueError, ZeroDivisionError):
            raise ConfigurationError(f"split: cannot parse {self.split!r} as a fraction") from None
        if not 0 < frac < 1:
            raise ConfigurationError(f"split: must lie in (0, 1), got {self.split}")
        return frac

    def dataset(self) -> gwdata.SeriesDataset:
        if self.series_csv:
            return gwdata.make_dataset(gwdata.load_series_csv(self.series_csv), self.lookback,
                                       self.split_fraction(), rescale=True)
        spec = gwdata.default_spec(self.setting, total_samples=self.samples, seed=self.seed)
        return gwdata.make_dataset(gwdata.synthesize(spec), self.lookback, self.split_fraction())


def parse_config(text: str, base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigurationError(f"{key}: unknown key (line {lineno})")
        conv = {"int": int, "float": float, "str": str}[types[key]]
        try:
            values[key] = conv(value)
        except ValueError:
            raise ConfigurationError(f"{key}: expected {types[key]}, got {value!r}") from None
    return replace(base, **values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))


def format_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in dataclasses.asdict(cfg).items())


def _num(x: float) -> str:
    return repr(float(x))


def write_history(path, history) -> None:
    rows = ["round,train_loss,test_loss"]
    rows += [f"{r.round},{_num(r.train_loss)},{_num(r.test_loss)}" for r in history]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")


def write_prediction(path, data: gwdata.SeriesDataset, pred: np.ndarray) -> None:
    by_t = dict(zip(data.all_t.tolist(), pred.tolist()))
    rows = ["t,truth,prediction"]
    for t, v in enumerate(data.series):
        rows.append(f"{t},{_num(v)},{_num(by_t[t]) if t in by_t else ''}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")


def write_bundle(path, bundle: fed.ParamBundle) -> None:
    lines = [f"{bundle.kind} {bundle.values.size}"] + [f"{v:.17g}" for v in bundle.values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_bundle(path) -> fed.ParamBundle:
    lines = Path(path).read_text(encoding="utf-8").split()
    kind, size = lines[0], int(lines[1])
    values = np.array([float(v) for v in lines[2:]])
    if values.size != size:
        raise ConfigurationError(f"{path}: header says {size} values, found {values.size}")
    return fed.ParamBundle(kind, values)


def open_loop_prediction(model, bundle: fed.ParamBundle, data: gwdata.SeriesDataset) -> np.ndarray:
    if hasattr(model, "materialize"):
        return model.lstm.predict(model.materialize(bundle.values), data.all_x)
    return model.predict(bundle.values, data.all_x)


def run_train(cfg: ExperimentConfig, out_dir) -> fed.FederationResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = cfg.dataset()
    model = cfg.make_model()
    result = fed.run_federation(cfg.fed_config(), model, (data.train_x, data.train_y),
                                (data.test_x, data.test_y))
    write_history(out / "history.csv", result.history)
    write_prediction(out / "prediction.csv", data, open_loop_prediction(model, result.final, data))
    write_bundle(out / "model.txt", result.final)
    (out / "config.txt").write_text(format_config(replace(cfg, out=str(out))), encoding="utf-8")
    return result


def run_sweep(cfg: ExperimentConfig, layers: list[int], out_dir) -> list[dict]:
    if not layers or any(n < 1 for n in layers):
        raise ConfigurationError("layers: need a non-empty list of positive integers")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in layers:
        sub = replace(cfg, model="qtlstm", qt_layers=n)
        result = run_train(sub, out / f"L{n}")
        last = result.history[-1]
        quantum = sub.make_model().counts()[1]
        rows.append(dict(layers=n, quantum_params=quantum, final_train_loss=last.train_loss,
                         final_test_loss=last.test_loss))
    lines = ["layers,quantum_params,final_train_loss,final_test_loss"]
    lines += [f"{r['layers']},{r['quantum_params']},{_num(r['final_train_loss'])},{_num(r['final_test_loss'])}"
              for r in rows]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return rows


def trend_report(rows: list[dict]) -> str:
    """Describe how final test loss moves as layers grow (rank correlation)."""
    ls = np.array([r["layers"] for r in rows], dtype=float)
    te = np.array([r["final_test_loss"] for r in rows])
    if len(rows) < 2:
        return "trend: single point"
    rank = lambda a: np.argsort(np.argsort(a)).astype(float)
    rho = float(np.corrcoef(rank(ls), rank(te))[0, 1]) if np.ptp(te) > 0 else 0.0
    monotone = bool(np.all(np.diff(te[np.argsort(ls)]) <= 0))
    return f"trend: spearman(layers, test_loss)={rho:+.3f} monotone_decreasing={monotone}"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _layers(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fedqt", description="Federated Quantum-Train LSTM experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic waveform as CSV")
    s.add_argument("--setting", type=int, choices=[1, 2, 3], required=True)
    s.add_argument("--out", required=True, help="output CSV path")
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("params", help="print trainable parameter counts")
    s.add_argument("--model", choices=["lstm", "qlstm", "qtlstm"])
    s.add_argument("--layers", type=int, default=10, help="QT layers for qtlstm")

    s = sub.add_parser("train", help="run one federated experiment")
    s.add_argument("--config", help="key=value experiment file")
    s.add_argument("--out", help="output directory (overrides config)")
    s.add_argument("--seed", type=int)
    s.add_argument("--setting", type=int, choices=[1, 2, 3])
    s.add_argument("--model", choices=["lstm", "qlstm", "qtlstm"])

    s = sub.add_parser("sweep", help="QT-LSTM layer sweep")
    s.add_argument("--config", help="key=value experiment file")
    s.add_argument("--layers", type=_layers, required=True, help="comma-separated layer counts")
    s.add_argument("--out", help="output directory (overrides config)")
    s.add_argument("--seed", type=int)
    s.add_argument("--setting", type=int, choices=[1, 2, 3])
    return p


def _experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {k: getattr(args, k) for k in ("seed", "setting", "model", "out")
                 if getattr(args, k, None) is not None}
    return replace(cfg, **overrides)


def params_table(model: str | None, layers: int) -> str:
    kinds = [model] if model else ["lstm", "qlstm", "qtlstm"]
    rows = ["model,classical,quantum,total"]
    for kind in kinds:
        classical, quantum = rnn.make_model(kind, qt_layers=layers).counts()
        rows.append(f"{kind},{classical},{quantum},{classical + quantum}")
    return "\n".join(rows)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            series = gwdata.synthesize(gwdata.default_spec(args.setting, seed=args.seed))
            gwdata.save_series_csv(args.out, series)
        elif args.command == "params":
            if args.layers < 1:
                raise ConfigurationError("layers: must be >= 1")
            print(params_table(args.model, args.layers))
        elif args.command == "train":
            cfg = _experiment(args)
            cfg.fed_config().validate()
            result = run_train(cfg, cfg.out)
            last = result.history[-1]
            print(f"{cfg.model}: round {last.round} train {last.train_loss:.6g} test {last.test_loss:.6g}")
        elif args.command == "sweep":
            cfg = _experiment(args)
            cfg.fed_config().validate()
            rows = run_sweep(cfg, args.layers, cfg.out)
            for r in rows:
                print(f"L={r['layers']:>2} quantum={r['quantum_params']:>3} "
                      f"train={r['final_train_loss']:.6g} test={r['final_test_loss']:.6g}")
            print(trend_report(rows))
    except ConfigurationError as exc:
        print(f"fedqt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FederationError, OSError) as exc:
        print(f"fedqt: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
