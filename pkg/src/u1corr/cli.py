"""Command-line front end.

Every subcommand reads a JSON model file (or a ``{"library": ...}`` document),
optionally sweeps one parameter, and writes CSV to stdout or ``--out``. Header
lines start with ``#`` and carry the package version and a model hash; data rows
are byte-stable for identical inputs.

Exit status: 0 success, 2 invalid input, 3 numerical guard tripped.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from . import correlators as corr
from . import library
from .errors import GuardError, ModelError, U1CorrError
from .model import SystemModel, dump_model, model_from_dict, model_hash, model_to_dict

WORKERS_ENV = "U1CORR_WORKERS"
EXIT_OK, EXIT_INVALID, EXIT_GUARD = 0, 2, 3


# -- sweeps ------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    path: str
    start: float
    stop: float
    count: int

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        parts = text.rsplit(":", 3)
        if len(parts) != 4:
            raise ModelError(f"sweep must look like param:start:stop:count, got {text!r}")
        path, a, b, c = parts
        try:
            spec = cls(path, float(a), float(b), int(c))
        except ValueError:
            raise ModelError(f"sweep bounds must be numbers and count an integer: {text!r}") from None
        if spec.count < 1:
            raise ModelError("sweep count must be at least 1")
        if spec.start > spec.stop:
            raise ModelError("sweep start must not exceed stop")
        return spec

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.start])
        return np.linspace(self.start, self.stop, self.count)


def _set_complex_real(container: dict, key: str, value: float) -> None:
    old = container.get(key, 0.0)
    if isinstance(old, list):
        container[key] = [value, old[1]]
    else:
        container[key] = value


def apply_sweep(doc: dict, path: str, value: float) -> dict:
    """Copy of a model document with one parameter set.

    Paths: ``drive.frequency`` (all drives), ``drive.<i>.frequency``,
    ``drive.<i>.amplitude``, ``site.<id>.frequency``, ``coupling.<i>.amplitude``
    and, for library documents, ``library.<param>``.
    """
    doc = copy.deepcopy(doc)
    head, _, rest = path.partition(".")
    if head == "library":
        if "library" not in doc or not rest:
            raise ModelError(f"sweep path {path!r} needs a library model document")
        doc["library"].setdefault("params", {})[rest] = value
        return doc
    if "library" in doc:
        if path == "drive.frequency":
            doc["library"].setdefault("params", {})["omega_d"] = value
            return doc
        doc = model_to_dict(model_from_dict(doc))
    bits = path.split(".")
    try:
        if bits == ["drive", "frequency"]:
            if not doc.get("drives"):
                raise ModelError("model has no drives to sweep")
            for d in doc["drives"]:
                d["frequency"] = value
        elif bits[0] == "drive" and len(bits) == 3 and bits[2] in ("frequency", "amplitude"):
            d = doc["drives"][int(bits[1])]
            if bits[2] == "frequency":
                d["frequency"] = value
            else:
                _set_complex_real(d, "amplitude", value)
        elif bits[0] == "site" and len(bits) == 3 and bits[2] == "frequency":
            site = next(s for s in doc["sites"] if s["id"] == bits[1])
            site["frequency"] = value
        elif bits[0] == "coupling" and len(bits) == 3 and bits[2] == "amplitude":
            _set_complex_real(doc["couplings"][int(bits[1])], "amplitude", value)
        else:
            raise ModelError(f"unknown sweep path {path!r}")
    except ModelError:
        raise
    except (IndexError, StopIteration, ValueError, KeyError):
        raise ModelError(f"sweep path {path!r} does not match the model") from None
    return doc


# -- per-point evaluation (module level so worker processes can pickle it) ----------

def _single_drive(model: SystemModel):
    if len(model.drives) != 1:
        raise ModelError(f"this command needs exactly one drive, the model has {len(model.drives)}")
    return model.drives[0]


def _eval_correlation(model: SystemModel, opts: dict) -> tuple:
    orders, out = opts["orders"], opts["out_channel"]
    eps = opts["epsilon"]
    if len(model.drives) == 1:
        d = model.drives[0]
        if d.channel == out:
            raise ModelError("drive and output channel coincide; use the same-channel command")
        T = corr.transmission(model, d.frequency, d.channel, out, eps) if opts["with_T"] else None
        gs = [corr.etcf(model, n, d.frequency, d.channel, out, eps) for n in orders]
    else:
        equal = len({d.frequency for d in model.drives}) == 1
        T = corr.transmission_multi(model, model.drives, out, eps) if (opts["with_T"] and equal) else None
        gs = [corr.etcf_multi(model, n, model.drives, out, 0.0, eps) for n in orders]
    return T, gs


def _eval_cross(model: SystemModel, opts: dict) -> tuple:
    d = _single_drive(model)
    return None, [corr.cross_correlation(model, opts["outputs"], d.frequency, d.channel, opts["epsilon"])]


def _eval_same(model: SystemModel, opts: dict) -> tuple:
    d = _single_drive(model)
    ch = opts["channel"] or d.channel
    T = corr.transmission_same(model, d.frequency, ch, opts["epsilon"])
    return T, [corr.etcf_same_channel(model, n, d.frequency, ch, opts["epsilon"]) for n in opts["orders"]]


_EVALUATORS: dict[str, Callable[[SystemModel, dict], tuple]] = {
    "correlation": _eval_correlation,
    "transmission": _eval_correlation,
    "cross": _eval_cross,
    "same-channel": _eval_same,
}


def _run_point(args) -> tuple[str, Any]:
    """Evaluate one sweep point; errors travel back as data so ordering and exit codes stay deterministic."""
    kind, doc, path, value, opts = args
    try:
        d = apply_sweep(doc, path, value) if path else doc
        model = model_from_dict(d)
        if opts["epsilon"] is not None:
            model = model.replace(epsilon=opts["epsilon"])
        T, gs = _EVALUATORS[kind](model, opts)
        return "ok", corr.csv_row([value] if path else [], T, gs)
    except GuardError as exc:
        return "guard", str(exc)
    except (ModelError, ValueError) as exc:
        return "invalid", str(exc)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ModelError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _map_points(tasks: list) -> list:
    workers = min(worker_count(), len(tasks))
    if workers <= 1:
        return [_run_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_point, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


# -- output --------------------------------------------------------------------------

class _Output:
    def __init__(self, path: str | None):
        self.path = path
        self.buf = io.StringIO()
        self.writer = csv.writer(self.buf, lineterminator="\n")

    def comment(self, text: str) -> None:
        self.buf.write(f"# {text}\n")

    def row(self, cells: Sequence[Any]) -> None:
        self.writer.writerow(cells)

    def flush(self) -> None:
        text = self.buf.getvalue()
        if self.path in (None, "-"):
            sys.stdout.write(text)
        else:
            with open(self.path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)


def _header(out: _Output, command: str, model: SystemModel, extra: Sequence[str] = ()) -> None:
    out.comment(f"u1corr {__version__} {command}")
    out.comment(f"model {model_hash(model)}")
    for line in extra:
        out.comment(line)


# -- commands --------------------------------------------------------------------------

def _load_doc(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ModelError(f"cannot read model file {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from None


def _orders(max_order: int) -> list[int]:
    if max_order < 2:
        raise ModelError("--order must be at least 2")
    return list(range(2, max_order + 1))


def _sweep_command(args, kind: str, opts: dict, columns: list[str]) -> int:
    doc = _load_doc(args.model)
    base = model_from_dict(doc)
    sweep = SweepSpec.parse(args.sweep) if args.sweep else None
    values = sweep.values() if sweep else [math.nan]
    path = sweep.path if sweep else None
    opts = {"epsilon": args.epsilon, **opts}
    results = _map_points([(kind, doc, path, float(v), opts) for v in values])
    for status, payload in results:
        if status == "guard":
            raise GuardError(payload)
        if status == "invalid":
            raise ModelError(payload)
    out = _Output(args.out)
    _header(out, kind, base, [f"sweep {sweep.path}" if sweep else "sweep none"])
    out.row(([path] if path else []) + columns)
    for _, row in results:
        out.row(row)
    out.flush()
    return EXIT_OK


def cmd_correlation(args) -> int:
    orders = _orders(args.order)
    opts = {"orders": orders, "out_channel": args.out_channel, "with_T": True}
    return _sweep_command(args, "correlation", opts, ["T", *[f"g{n}" for n in orders], "flags"])


def cmd_transmission(args) -> int:
    opts = {"orders": [], "out_channel": args.out_channel, "with_T": True}
    return _sweep_command(args, "transmission", opts, ["T", "flags"])


def cmd_cross(args) -> int:
    outputs = [s for s in args.outputs.split(",") if s]
    if len(outputs) < 2:
        raise ModelError("--outputs needs at least two comma-separated channel ids")
    opts = {"outputs": outputs}
    return _sweep_command(args, "cross", opts, ["T", f"g{len(outputs)}", "flags"])


def cmd_same_channel(args) -> int:
    orders = _orders(args.order)
    opts = {"orders": orders, "channel": args.channel}
    return _sweep_command(args, "same-channel", opts, ["T", *[f"g{n}" for n in orders], "flags"])


def _parse_grid(text: str) -> np.ndarray:
    spec = SweepSpec.parse("t:" + text)
    return spec.values()


def cmd_dynamical(args) -> int:
    model = model_from_dict(_load_doc(args.model))
    if args.epsilon is not None:
        model = model.replace(epsilon=args.epsilon)
    if not model.drives:
        raise ModelError("model has no drives")
    orders = _orders(args.order)
    times = _parse_grid(args.times)
    series = {n: corr.multi_drive_series(model, n, model.drives, args.out_channel) for n in orders}
    values = {n: s.values(times) for n, s in series.items()}
    period = series[orders[0]].period
    notes = []
    if period is None:
        notes.append("period none (static or incommensurate drive frequencies)")
    else:
        shift = {n: s.values(times + period) for n, s in series.items()}
        worst = max(float(np.nanmax(np.abs(shift[n] - values[n]) / np.abs(values[n]))) for n in orders)
        notes.append(f"period {float(period)!r}")
        notes.append(f"period check max relative deviation {worst:.3e}")
    out = _Output(args.out)
    _header(out, "dynamical", model, notes)
    out.row(["t", *[f"g{n}" for n in orders], "flags"])
    for k, t in enumerate(times):
        cells = [corr.fmt_float(t)]
        flags = []
        for n in orders:
            v = values[n][k]
            if np.isnan(v):
                flags.append(f"g{n}_undefined")
                cells.append("")
            else:
                cells.append(corr.fmt_float(v))
        out.row(cells + [";".join(flags)])
    out.flush()
    return EXIT_OK


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise ModelError(f"expected a comma-separated list of numbers, got {text!r}") from None


def cmd_oracle_check(args) -> int:
    from . import oracle

    model = model_from_dict(_load_doc(args.model))
    if args.epsilon is not None:
        model = model.replace(epsilon=args.epsilon)
    if not model.drives:
        raise ModelError("model has no drives")
    if len({d.frequency for d in model.drives}) != 1:
        raise ModelError("oracle-check needs equal drive frequencies (static steady state)")
    orders = _orders(args.order)
    amps = _float_list(args.drive_amp)
    if not amps or min(amps) <= 0:
        raise ModelError("--drive-amp needs positive amplitudes")
    cutoff = oracle.FockCutoff(args.cutoff, args.total_cutoff)
    cutoff.check_order(model, max(orders))
    out_ch = args.out_channel
    same = len(model.drives) == 1 and model.drives[0].channel == out_ch
    analytic = {}
    for n in orders:
        if same:
            analytic[n] = corr.etcf_same_channel(model, n, model.drives[0].frequency, out_ch)
        elif len(model.drives) == 1:
            d = model.drives[0]
            analytic[n] = corr.etcf(model, n, d.frequency, d.channel, out_ch)
        else:
            analytic[n] = corr.etcf_multi(model, n, model.drives, out_ch)
    spec = oracle.OutputField(out_ch, include_drive=same)
    rows, errors = [], {n: [] for n in orders}
    for amp in amps:
        L = oracle.build_liouvillian(model, amp, cutoff)
        rho = oracle.steady_state(L)
        for n in orders:
            ref = oracle.correlator_from_state(rho, L, model, spec, n)
            a = analytic[n]
            if a.undefined or ref.undefined:
                err = None
            else:
                err = abs(ref.value - a.value) / abs(a.value)
                errors[n].append((amp, err))
            rows.append([corr.fmt_float(amp), str(n), corr.fmt_float(a.value), corr.fmt_float(ref.value),
                         corr.fmt_float(err), f"{rho.edge_population:.3e}"])
    notes = [f"cutoff per_site={args.cutoff} total={args.total_cutoff}"]
    for n in orders:
        pts = [(a, e) for a, e in errors[n] if e > 0]
        if len(pts) >= 2:
            slope = np.polyfit(np.log([a for a, _ in pts]), np.log([e for _, e in pts]), 1)[0]
            notes.append(f"g{n} error exponent {slope:.3f}")
    out = _Output(args.out)
    _header(out, "oracle-check", model, notes)
    out.row(["drive_amp", "n", "analytic", "oracle", "rel_error", "edge_population"])
    for r in rows:
        out.row(r)
    out.flush()
    return EXIT_OK


def _coerce(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def cmd_export_model(args) -> int:
    if bool(args.model) == bool(args.library):
        raise ModelError("give exactly one of --model or --library")
    if args.library:
        params = {}
        for item in args.param or []:
            key, sep, val = item.partition("=")
            if not sep:
                raise ModelError(f"--param expects key=value, got {item!r}")
            params[key] = _coerce(val)
        model = library.build_named(args.library, params)
    else:
        model = model_from_dict(_load_doc(args.model))
    text = dump_model(model) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


# -- parser --------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="u1corr", description=__doc__.split("\n\n")[0], allow_abbrev=False)
    p.add_argument("--version", action="version", version=f"u1corr {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, order=True, sweep=True):
        sp.add_argument("--model", required=True, metavar="PATH", help="JSON model file")
        sp.add_argument("--out", metavar="PATH", help="CSV destination (default stdout)")
        sp.add_argument("--epsilon", type=float, help="resolvent regularisation override")
        if order:
            sp.add_argument("--order", type=int, default=2, metavar="N", help="highest correlation order")
        if sweep:
            sp.add_argument("--sweep", metavar="param:start:stop:count")

    c = sub.add_parser("correlation", help="g^(2..N) and transmission over a sweep", allow_abbrev=False)
    common(c)
    c.add_argument("--out-channel", required=True)
    c.set_defaults(func=cmd_correlation)

    t = sub.add_parser("transmission", help="single-photon transmission over a sweep", allow_abbrev=False)
    common(t, order=False)
    t.add_argument("--out-channel", required=True)
    t.set_defaults(func=cmd_transmission)

    d = sub.add_parser("dynamical", help="g^(n)(t) under drives at different frequencies", allow_abbrev=False)
    common(d, sweep=False)
    d.add_argument("--out-channel", required=True)
    d.add_argument("--times", required=True, metavar="start:stop:count")
    d.set_defaults(func=cmd_dynamical)

    x = sub.add_parser("cross", help="cross-correlation between output channels", allow_abbrev=False)
    common(x, order=False)
    x.add_argument("--outputs", required=True, metavar="CH1,CH2,...")
    x.set_defaults(func=cmd_cross)

    s = sub.add_parser("same-channel", help="transmission and g^(n) when drive and readout share a channel",
                       allow_abbrev=False)
    common(s)
    s.add_argument("--channel", help="channel id (default: the drive's channel)")
    s.set_defaults(func=cmd_same_channel)

    o = sub.add_parser("oracle-check", help="compare against the master-equation steady state", allow_abbrev=False)
    common(o, sweep=False)
    o.add_argument("--out-channel", required=True)
    o.add_argument("--drive-amp", default="1e-2,1e-3,1e-4", metavar="X[,X...]")
    o.add_argument("--cutoff", type=int, default=5, metavar="N", help="per-boson Fock cutoff")
    o.add_argument("--total-cutoff", type=int, default=None, metavar="N", help="optional cap on total excitations")
    o.set_defaults(func=cmd_oracle_check)

    e = sub.add_parser("export-model", help="write a model as normalised JSON", allow_abbrev=False)
    e.add_argument("--model", metavar="PATH")
    e.add_argument("--library", choices=library.library_names())
    e.add_argument("--param", action="append", metavar="KEY=VALUE")
    e.add_argument("--out", metavar="PATH")
    e.set_defaults(func=cmd_export_model)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GuardError as exc:
        print(f"u1corr: guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ModelError, ValueError) as exc:
        print(f"u1corr: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except U1CorrError as exc:  # pragma: no cover - all subclasses handled above
        print(f"u1corr: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
