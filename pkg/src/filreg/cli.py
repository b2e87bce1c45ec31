"""Command-line interface: ``filreg <subcommand> ...``.

Exit codes: 0 success / pass, 2 definitive FAIL verdict, 1 error.
Every output echoes the full run configuration.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import gallery
from .fields import CuscoOracle, PiecewiseField, dumps, field_from_text

SUBCOMMANDS = ("regularize", "represent", "simulate", "clarke", "partition", "gallery")


class CliError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params: dict

    def echo(self) -> dict:
        return {"subcommand": self.subcommand, **self.params}

    def header(self) -> str:
        return "# config: " + dumps(self.echo())


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 (2 is reserved for FAIL verdicts)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return v
    return conv


def _unit_open(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text!r}")
    return v


def _add_schedule(p):
    p.add_argument("--delta0", type=_positive(float), default=0.5, help="initial ball radius")
    p.add_argument("--ratio", type=_unit_open, default=0.5, help="radius ratio between steps")
    p.add_argument("--k-steps", type=_positive(int), default=12, help="number of radii")
    p.add_argument("--n-samples", type=_positive(int), default=4096, help="samples per radius")
    p.add_argument("--tol-conv", type=_positive(float), default=1e-3, help="convergence tolerance")


class _DefaultsFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Show the default of every option, including those without help text."""

    def _get_help_string(self, action):
        text = action.help or ""
        if ("%(default)" in text or "(default" in text or action.default is argparse.SUPPRESS or not action.option_strings
                or action.required):
            return text
        return (text + " (default: %(default)s)").strip()


def build_parser() -> argparse.ArgumentParser:
    fmt = _DefaultsFormatter
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="JSON file with option values (flags override it)")
    common.add_argument("--seed", type=int, default=42, help="master seed")
    common.add_argument("--out", default=None, help="output path (stdout if omitted)")

    parser = _Parser(prog="filreg", description=__doc__, formatter_class=fmt)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("regularize", parents=[common], formatter_class=fmt,
                       help="Filippov / Krasovskii hull of a field at a point")
    p.add_argument("--field", required=True, help="gallery name, JSON spec file, or inline JSON")
    p.add_argument("--x", required=True, type=_floats, help="point, e.g. 0 or 0,0.3")
    p.add_argument("--engine", choices=("exact", "mc"), default="exact")
    p.add_argument("--kras", action="store_true", help="Krasovskii instead of Filippov (exact engine)")
    _add_schedule(p)

    p = sub.add_parser("represent", parents=[common], formatter_class=fmt,
                       help="compare a cusco map with its minimal map at probes")
    p.add_argument("--oracle", required=True, help="gallery oracle name, filippov:<field>, or JSON spec")
    p.add_argument("--probes", required=True, help="JSON file (or inline JSON) with a list of points")
    p.add_argument("--tol", type=_positive(float), default=0.02)
    p.add_argument("--expect", choices=("representable", "not-representable", "none"), default="representable")
    _add_schedule(p)

    p = sub.add_parser("simulate", parents=[common], formatter_class=fmt, help="integrate x' in F_f(x)")
    p.add_argument("--field", required=True)
    p.add_argument("--x0", required=True, type=_floats)
    p.add_argument("--T", required=True, type=_positive(float))
    p.add_argument("--h-max", type=_positive(float), default=None, help="max step (default 1e-3 T)")
    p.add_argument("--tol-event", type=_positive(float), default=1e-10)
    p.add_argument("--check", action="store_true", help="append the residual report")
    p.add_argument("--tol", type=_positive(float), default=None, help="residual tolerance (default 10 h_max)")
    p.add_argument("--csv", default=None, help="alias of --out")

    p = sub.add_parser("clarke", parents=[common], formatter_class=fmt, help="weak curl test and subdifferentials")
    p.add_argument("--field", required=True)
    p.add_argument("--box", type=_floats, default=[-1.0, 1.0], help="lo,hi (all axes) or lo1,hi1,lo2,hi2,...")
    p.add_argument("--n", type=_positive(int), default=None, help="quadrature nodes per axis (256 in 2-D, 64 in 3-D)")
    p.add_argument("--m", type=_positive(int), default=4, help="bumps per axis")
    p.add_argument("--tol", type=_positive(float), default=5e-3)
    p.add_argument("--h", type=_positive(float), default=1.0 / 64, help="potential grid spacing")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--check", action="store_true", help="emit the curl report (default)")
    g.add_argument("--potential", default=None, help="write the potential grid CSV to this path ('-' = stdout)")
    g.add_argument("--at", type=_floats, default=None, help="Clarke subdifferential at a point")
    _add_schedule(p)

    p = sub.add_parser("partition", parents=[common], formatter_class=fmt,
                       help="build a splitting partition and print its certificate")
    p.add_argument("--n-cls", type=_positive(int), default=8)
    p.add_argument("--k-max", type=_positive(int), default=32)
    p.add_argument("--depth", type=_positive(int), default=12)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--json", action="store_true", help="emit the partition JSON instead of the CSV table")

    p = sub.add_parser("gallery", parents=[common], formatter_class=fmt, help="list or dump built-ins")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--list", action="store_true")
    g.add_argument("--dump", default=None, metavar="NAME")
    # argparse prints no help line (so no default) for options without help text
    for subparser in sub.choices.values():
        for act in subparser._actions:
            if act.help is None and act.option_strings:
                act.help = "required" if act.required else "(default: %(default)s)"
    return parser


def _apply_config(parser: argparse.ArgumentParser, subcommand: str, path: str) -> None:
    """Install config-file values as subparser defaults (flags still override them)."""
    with open(path, encoding="utf-8") as fh:
        conf = json.load(fh)
    if not isinstance(conf, dict):
        raise CliError("config file must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[subcommand]
    actions = {a.dest: a for a in subparser._actions}
    bad = sorted(k for k in (key.replace("-", "_") for key in conf) if k not in actions or k in ("help", "config"))
    if bad:
        raise CliError(f"unknown config keys: {', '.join(bad)}")
    defaults = {}
    for key, value in conf.items():
        act = actions[key.replace("-", "_")]
        act.required = False
        if act.type is not None and value is not None:
            # route through the flag's converter so ranges are checked
            value = act.type(",".join(map(str, value)) if isinstance(value, list) else str(value))
        defaults[act.dest] = value
    subparser.set_defaults(**defaults)


def parse_config(argv=None) -> RunConfig:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    subcommand = next((a for a in argv if a in SUBCOMMANDS), None)
    if known.config and subcommand:
        try:
            _apply_config(parser, subcommand, known.config)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            parser.error(f"config: {exc}")
    args = parser.parse_args(argv)
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("subcommand", "config")}
    return RunConfig(args.subcommand, params)


# ---------------------------------------------------------------------------
# running


def _load(source: str):
    if os.path.isfile(source):
        with open(source, encoding="utf-8") as fh:
            return field_from_text(fh.read())
    if source.lstrip().startswith("{"):
        return field_from_text(source)
    return gallery.get(source)


def _schedule(p):
    from .regularization import Schedule
    return Schedule(p["delta0"], p["ratio"], p["k_steps"], p["n_samples"], p["tol_conv"])


def _point(vals, d: int) -> np.ndarray:
    x = np.asarray(vals, dtype=float)
    if x.size != d:
        raise CliError(f"point {list(vals)} does not have dimension {d}")
    return x


def _emit(text: str, path: str | None):
    if path and path != "-":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_out(cfg: RunConfig, payload: dict) -> str:
    return dumps({"config": cfg.echo(), **payload}) + "\n"


def _run_regularize(cfg: RunConfig) -> int:
    from .regularization import filippov_exact, filippov_mc, krasovskii_exact
    p = cfg.params
    f = _load(p["field"])
    if isinstance(f, CuscoOracle):
        raise CliError("regularize needs a field, not an oracle")
    x = _point(p["x"], f.d)
    if p["engine"] == "exact":
        if not isinstance(f, PiecewiseField):
            raise CliError(f"exact engine needs a piecewise field; use --engine mc for {f.name!r}")
        body = krasovskii_exact(f, x) if p["kras"] else filippov_exact(f, x)
        payload = {"body": body.to_json(), "engine": "exact", "map": "krasovskii" if p["kras"] else "filippov"}
    else:
        if p["kras"]:
            raise CliError("--kras is only available with the exact engine")
        est = filippov_mc(f, x, _schedule(p), p["seed"])
        payload = {"engine": "mc", "map": "filippov", **est.to_json()}
    _emit(_json_out(cfg, payload), p["out"])
    return 0


def _read_probes(source: str):
    text = open(source, encoding="utf-8").read() if os.path.isfile(source) else source
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"probes: invalid JSON ({exc.msg} at position {exc.pos})") from None
    if not isinstance(data, list) or not data:
        raise CliError("probes must be a nonempty JSON list of points")
    return data


def _run_represent(cfg: RunConfig) -> int:
    from .regularization import is_representable
    p = cfg.params
    phi = _load(p["oracle"])
    if not isinstance(phi, CuscoOracle):
        raise CliError("represent needs an oracle (gallery oracle or filippov:<field>)")
    probes = np.array([_point(np.atleast_1d(v), phi.d) for v in _read_probes(p["probes"])])
    verdicts, overall = is_representable(phi, probes, _schedule(p), p["tol"], p["seed"])
    lines = [cfg.header(), "probe,phi_value,m_value,gap,status"]
    for v in verdicts:
        lines.append(",".join([
            ";".join(repr(float(c)) for c in v.probe),
            '"' + dumps(v.phi_value.to_json()) + '"',
            '"' + dumps(v.m_value.to_json()) + '"',
            repr(v.gap), v.status]))
    label = {True: "representable", False: "not-representable", None: "inconclusive"}[overall]
    lines.append(f"# overall: {label}")
    _emit("\n".join(lines) + "\n", p["out"])
    if p["expect"] == "representable" and overall is False:
        return 2
    if p["expect"] == "not-representable" and overall is True:
        return 2
    return 0


def _run_simulate(cfg: RunConfig) -> int:
    from .dynamics import integrate, residual_check
    p = cfg.params
    f = _load(p["field"])
    if not isinstance(f, PiecewiseField):
        raise CliError("simulate needs a piecewise field")
    x0 = _point(p["x0"], f.d)
    tr = integrate(f, x0, p["T"], p["h_max"], p["tol_event"])
    text = tr.to_csv(cfg.header())
    code = 0
    if p["check"]:
        h_max = p["h_max"] if p["h_max"] is not None else 1e-3 * p["T"]
        tol = p["tol"] if p["tol"] is not None else 10.0 * h_max
        rep = residual_check(tr, f, tol=tol)
        text += (f"# residual: max={rep.max_residual!r} at_index={rep.index} tol={rep.tol!r} "
                 f"status={'pass' if rep.passed else 'fail'}\n")
        code = 0 if rep.passed else 2
    _emit(text, p["csv"] or p["out"])
    return code


def _run_clarke(cfg: RunConfig) -> int:
    from .clarke import clarke_subdiff, poincare_check, reconstruct_potential
    p = cfg.params
    f = _load(p["field"])
    if isinstance(f, CuscoOracle):
        raise CliError("clarke needs a field")
    box = np.asarray(p["box"], dtype=float)
    box = np.tile(box, (f.d, 1)) if box.size == 2 else box.reshape(-1, 2)
    if box.shape != (f.d, 2):
        raise CliError(f"--box needs 2 or {2 * f.d} numbers")
    if p["potential"] is not None:
        grid = reconstruct_potential(f, box, p["h"], p["tol"])
        _emit(grid.to_csv(cfg.header()), p["potential"])
        return 0
    if p["at"] is not None:
        x = _point(p["at"], f.d)
        body = clarke_subdiff(f, x, box, p["n"], p["m"], p["tol"], _schedule(p), p["seed"])
        _emit(_json_out(cfg, {"body": body.to_json()}), p["out"])
        return 0
    ok, rep = poincare_check(f, box, p["n"], p["m"], p["tol"])
    _emit(_json_out(cfg, {"curl": rep.to_json(), "tol": p["tol"], "status": "pass" if ok else "fail"}), p["out"])
    return 0 if ok else 2


def _run_partition(cfg: RunConfig) -> int:
    from .partition import build_splitting
    p = cfg.params
    part = build_splitting(p["n_cls"], p["k_max"], p["depth"], p["r"])
    if p["json"]:
        _emit(_json_out(cfg, {"partition": part.to_json()}), p["out"])
    else:
        _emit(cfg.header() + "\n" + part.certificate_csv(), p["out"])
    return 0 if part.certificate_ok() else 2


def _run_gallery(cfg: RunConfig) -> int:
    p = cfg.params
    if p["list"]:
        _emit("\n".join(gallery.names()) + "\n", p["out"])
    else:
        _emit(gallery.dump(p["dump"]) + "\n", p["out"])
    return 0


_RUNNERS = {
    "regularize": _run_regularize,
    "represent": _run_represent,
    "simulate": _run_simulate,
    "clarke": _run_clarke,
    "partition": _run_partition,
    "gallery": _run_gallery,
}


def run(cfg: RunConfig) -> int:
    try:
        return _RUNNERS[cfg.subcommand](cfg)
    except (CliError, ValueError, KeyError, OSError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        sys.stderr.write(f"filreg {cfg.subcommand}: error: {msg}\n")
        return 1


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except CliError as exc:
        sys.stderr.write(f"filreg: error: {exc}\n")
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"filreg: error: config: {exc}\n")
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
