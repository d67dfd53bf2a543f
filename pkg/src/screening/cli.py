"""Command-line entry point.

    screening <command> --config run.json [--threads N] [--out DIR]

Commands: minimize, continuum, recover, sweep (--neutrality/--energy/
--saturation/--instability) and verify.  Results go to DIR as JSON or CSV;
run metadata (options, seeds, version, timestamp) goes to a ``*.meta.json``
sidecar so the result files themselves are reproducible byte for byte.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("minimize", "continuum", "recover", "sweep", "verify")


class ConfigFileError(Exception):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    command: str
    nuclei_file: str | None = None
    options: dict[str, Any] = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def seed(self) -> int:
        return int(self.options.get("seed", 0))


def _json_error(path: Path, text: str, exc: json.JSONDecodeError) -> str:
    lines = text.splitlines()
    shown = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
    caret = " " * max(exc.colno - 1, 0) + "^"
    return f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {shown}\n    {caret}"


def read_config(path: str | Path, command: str) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigFileError(f"{p}: cannot read config ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(_json_error(p, text, exc)) from exc
    if not isinstance(doc, dict):
        raise ConfigFileError(f"{p}:1:1: top-level value must be an object")
    nuclei_file = doc.get("nuclei_file")
    if nuclei_file is not None and not (p.parent / nuclei_file).exists():
        raise ConfigFileError(f"{p}: nuclei_file {nuclei_file!r} does not exist")
    return RunConfig(command, nuclei_file, doc, p.parent)


# -- helpers ---------------------------------------------------------------------


def _nuclei(cfg: RunConfig):
    from .core import NuclearConfig, load_nuclei

    if cfg.nuclei_file:
        return load_nuclei(cfg.base_dir / cfg.nuclei_file)
    if "nuclei" in cfg.options:
        return NuclearConfig.from_dict(cfg.options)
    raise ConfigFileError("config needs 'nuclei' (with 'd') or 'nuclei_file'")


def _opts(cfg: RunConfig, threads: int):
    from .optimize import OptimizeOptions

    raw = dict(cfg.options.get("optimizer", {}))
    raw["seed"] = cfg.seed
    raw["threads"] = threads
    try:
        return OptimizeOptions(**raw)
    except TypeError as exc:
        raise ConfigFileError(f"optimizer: {exc}") from exc


def _schedule(cfg: RunConfig, key: str, section: dict | None = None) -> list:
    src = cfg.options if section is None else section
    values = src.get(key)
    if not isinstance(values, list) or not values:
        raise ConfigFileError(f"'{key}' must be a nonempty list")
    return values


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_meta(out: Path, stem: str, cfg: RunConfig, threads: int, extra: dict | None = None) -> None:
    meta = {
        "command": cfg.command,
        "config": cfg.options,
        "seed": cfg.seed,
        "threads": threads,
        "version": __version__,
        "python": platform.python_version(),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    meta.update(extra or {})
    _write_json(out / f"{stem}.meta.json", meta)


# -- commands --------------------------------------------------------------------


def cmd_minimize(cfg: RunConfig, out: Path, threads: int) -> int:
    from .analysis import NotAbsorbedError, screening_stats
    from .optimize import minimize

    nuc = _nuclei(cfg)
    N = int(cfg.options.get("N", round(nuc.total_charge)))
    res = minimize(N, nuc, _opts(cfg, threads))
    doc = {"N": N, "nuclei": nuc.to_dict(), "result": res.to_dict()}
    try:
        doc["stats"] = screening_stats(res, nuc).to_dict()
    except NotAbsorbedError:
        doc["stats"] = None
    _write_json(out / "minimize.json", doc)
    _write_meta(out, "minimize", cfg, threads, {"restart_energies": list(res.restart_energies)})
    print(f"N={N} energy={res.energy.total:.12g} absorbed={res.absorbed} counts={list(res.per_nucleus_counts)}")
    return EXIT_OK


def cmd_continuum(cfg: RunConfig, out: Path, threads: int) -> int:
    from .continuum import UnsupportedCaseError, coulomb_norm, explicit_minimizer, fourier_energy
    from .core import CompositeMeasure, LimitParams

    nuc = _nuclei(cfg)
    lam = float(cfg.options.get("lambda", 1.0))
    params = LimitParams.from_nuclei(nuc, lam)
    doc: dict[str, Any] = {"lambda": lam, "z": list(params.z_fractions)}
    try:
        best = explicit_minimizer(nuc, params)
    except UnsupportedCaseError as exc:
        doc["minimizer"] = None
        doc["note"] = str(exc)
        _write_json(out / "continuum.json", doc)
        _write_meta(out, "continuum", cfg, threads)
        print(f"no closed-form minimizer: {exc}")
        return EXIT_OK
    empty = CompositeMeasure()
    J = coulomb_norm(best.measure, empty)
    F = fourier_energy(best.measure, empty)
    doc.update(
        minimizer=best.to_dict(),
        e=best.energy,
        J_closed_form=J,
        J_fourier=F,
        J_relative_difference=abs(J - F) / abs(J) if J else 0.0,
    )
    _write_json(out / "continuum.json", doc)
    _write_meta(out, "continuum", cfg, threads)
    print(f"e={best.energy:.12g} J={J:.12g} J_fourier={F:.12g}")
    return EXIT_OK


def cmd_recover(cfg: RunConfig, out: Path, threads: int) -> int:
    from .core import CompositeMeasure, LimitParams
    from .recover import recovery_sequence, to_csv

    nuc = _nuclei(cfg)
    if "target" not in cfg.options:
        raise ConfigFileError("recover needs a 'target' measure")
    mu = CompositeMeasure.from_dict(cfg.options["target"])
    params = LimitParams.from_nuclei(nuc, float(cfg.options.get("lambda", 1.0)))
    steps = recovery_sequence(
        mu,
        nuc,
        params,
        [float(z) for z in _schedule(cfg, "Z_schedule")],
        mesh_exponent=float(cfg.options.get("mesh_exponent", 1.0 / 6.0)),
        h0=float(cfg.options.get("h0", 0.5)),
    )
    _write_text(out / "recovery.csv", to_csv(steps))
    checks = {
        "allocation_ok": [s.allocation_ok for s in steps],
        "short_range_ok": [s.short_range <= s.short_range_bound for s in steps],
    }
    _write_meta(out, "recovery", cfg, threads, checks)
    for s in steps:
        print(f"Z={s.Z:g} N={s.N} gap={s.energy_gap:.6g} weakstar={s.weakstar_err:.6g}")
    ok = all(checks["allocation_ok"]) and all(checks["short_range_ok"])
    return EXIT_OK if ok else EXIT_FAILED


def cmd_sweep(cfg: RunConfig, out: Path, threads: int, which: list[str]) -> int:
    from . import analysis

    if not which:
        raise ConfigFileError("sweep needs at least one of --neutrality/--energy/--saturation/--instability")
    sec = cfg.options.get("sweep")
    if not isinstance(sec, dict):
        raise ConfigFileError("sweep needs a 'sweep' section")
    try:
        positions, fractions, d = sec["positions"], sec["fractions"], float(sec["d"])
    except KeyError as exc:
        raise ConfigFileError(f"sweep section lacks {exc}") from exc
    opts = _opts(cfg, threads)
    for kind in which:
        if kind == "neutrality":
            table = analysis.neutrality_sweep(positions, fractions, d, _schedule(cfg, "Z_schedule", sec), opts)
        elif kind == "energy":
            table = analysis.energy_sweep(positions, fractions, d, _schedule(cfg, "Z_schedule", sec), opts)
        elif kind == "saturation":
            table = analysis.saturation_curve(
                positions, fractions, d, int(sec.get("Z", 100)), _schedule(cfg, "lambda_schedule", sec), opts
            )
        else:
            table = analysis.instability_sweep(positions, fractions, d, _schedule(cfg, "Z_schedule", sec), opts)
        _write_text(out / f"{kind}.csv", table.to_csv())
        _write_meta(out, kind, cfg, threads, table.meta)
        print(f"{kind}: {len(table.rows)} rows -> {out / (kind + '.csv')}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig | None, out: Path, threads: int) -> int:
    from .verify import run_all

    results = run_all()
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from .optimize import default_threads

    parser = argparse.ArgumentParser(prog="screening", description="Screening experiments for hard-core Coulomb systems.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--threads", type=int, default=default_threads(), help="worker processes (default: all cores)")
    parser.add_argument("--out", default=".", help="output directory")
    for kind in ("neutrality", "energy", "saturation", "instability"):
        parser.add_argument(f"--{kind}", action="store_true", help=f"run the {kind} sweep")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "verify":
            cfg = read_config(args.config, "verify") if args.config else None
            return cmd_verify(cfg, out, args.threads)
        if not args.config:
            raise ConfigFileError(f"{args.command} requires --config")
        cfg = read_config(args.config, args.command)
        if args.command == "minimize":
            return cmd_minimize(cfg, out, args.threads)
        if args.command == "continuum":
            return cmd_continuum(cfg, out, args.threads)
        if args.command == "recover":
            return cmd_recover(cfg, out, args.threads)
        which = [k for k in ("neutrality", "energy", "saturation", "instability") if getattr(args, k)]
        return cmd_sweep(cfg, out, args.threads, which)
    except ConfigFileError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, TypeError) as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
