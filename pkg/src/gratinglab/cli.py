"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from gratinglab import __version__
from gratinglab._format import dump_json, fmt
from gratinglab.corner import (
    corner_spectrum,
    determinant_M,
    leading_exponent,
    lemma1_predicates,
)
from gratinglab.errors import SolverError, ValidationError
from gratinglab.forward import (
    Gamma0BC,
    MediumCoefficients,
    convergence_study,
    energy_balance,
    flat_layer_oracle,
    solve_forward,
)
from gratinglab.inverse import MeasurementData, ReconstructConfig, SearchSpace, reconstruct
from gratinglab.modes import IncidentWave, efficiencies, modes_csv, uniform_grid
from gratinglab.profile import GratingProfile, validate_profile
from gratinglab.series import constraint_matrix, nullspace_dimension, smallest_singular_values

log = logging.getLogger("gratinglab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


# ---------------------------------------------------------------- config


def _read_text(path: str) -> str:
    p = Path(path)
    try:
        return p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def _load_json(path: str) -> dict:
    try:
        data = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be a JSON object")
    return data


def _get(cfg: dict, key: str, kind=float):
    if key not in cfg:
        raise ValidationError(f"config is missing '{key}'")
    try:
        return kind(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"config '{key}': {exc}") from exc


def _medium(cfg: dict) -> MediumCoefficients:
    # flat keys (k1, k2, lambda) or a nested "medium" object
    m = cfg.get("medium", cfg)
    if not isinstance(m, dict):
        raise ValidationError("'medium' must be an object with k1, k2, lambda")
    return MediumCoefficients(_get(m, "k1"), _get(m, "k2"), _get(m, "lambda"))


def _wave(cfg: dict, medium: MediumCoefficients) -> IncidentWave:
    inc = cfg.get("incident", cfg)
    amp = inc.get("amplitude", 1.0)
    try:
        if isinstance(amp, (list, tuple)):
            amp = complex(float(amp[0]), float(amp[1]))
        theta = float(inc.get("theta", 0.0))
    except (TypeError, ValueError, IndexError) as exc:
        raise ValidationError(f"bad incident wave parameters: {exc}") from exc
    return IncidentWave(medium.k1, theta, amp)


def _profile(cfg: dict) -> GratingProfile:
    p = cfg.get("profile")
    if not isinstance(p, dict) or "breakpoints" not in p or "heights" not in p:
        raise ValidationError("config needs a 'profile' object with breakpoints and heights")
    return validate_profile(p["breakpoints"], p["heights"])


def _common(cfg: dict):
    medium = _medium(cfg)
    n_modes = cfg.get("n_modes")
    return (
        medium,
        _wave(cfg, medium),
        None if n_modes is None else int(n_modes),
        Gamma0BC(cfg.get("gamma0_bc", "neumann")),
    )


def _out_dir(path: str) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _cfloat(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


# ---------------------------------------------------------------- subcommands


def cmd_forward(args) -> int:
    cfg = _load_json(args.config)
    profile = _profile(cfg)
    medium, wave, n_modes, bc = _common(cfg)
    H, h = _get(cfg, "H"), _get(cfg, "mesh_h")
    sol = solve_forward(profile, medium, wave, H, h, n_modes, bc)
    spec = sol.rayleigh()
    eff = efficiencies(spec, wave)
    eb = energy_balance(sol)
    out = _out_dir(args.out)
    _write(out / "modes.csv", modes_csv(spec, wave))
    _write(out / "field.csv", sol.field_csv(int(cfg.get("field_n1", 64)), int(cfg.get("field_n2", 32))))

    M = int(cfg.get("samples", 128))
    data = MeasurementData(H, uniform_grid(M), sol.trace(uniform_grid(M)), {})
    noise = cfg.get("noise")
    if noise:
        rel, seed = float(noise.get("rel", 0.0)), int(noise.get("seed", 0))
        if rel < 0:
            raise ValidationError("noise.rel must be >= 0")
        rng = np.random.default_rng(seed)
        sigma = rel * np.linalg.norm(data.values) / math.sqrt(M)
        vals = data.values + sigma * (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / math.sqrt(2.0)
        data = MeasurementData(H, data.grid, vals, {})
    _write(out / "trace.csv", data.to_csv())
    summary = {
        "profile": profile.to_dict(),
        "H": H,
        "mesh_h": h,
        "mesh_shape": list(sol.mesh.shape),
        "n_modes": sol.modes.N,
        "gamma0_bc": bc.value,
        "relative_residual": sol.residual,
        "efficiencies": {str(n): v for n, v in zip(eff.orders, eff.values)},
        "energy_total": eb.total,
        "energy_residual": eb.residual if eb.applicable else None,
        "warnings": sol.warnings,
        "noise": noise or None,
    }
    _write(out / "summary.json", dump_json(summary))
    return 0


def cmd_flat_oracle(args) -> int:
    cfg = _load_json(args.config)
    medium, wave, n_modes, bc = _common(cfg)
    if "c" in cfg:
        c = _get(cfg, "c")
    else:
        p = _profile(cfg)
        if not p.is_flat:
            raise ValidationError("flat-oracle needs a flat profile or a layer height 'c'")
        c = p.heights[0]
    H, h = _get(cfg, "H"), _get(cfg, "mesh_h")
    orc = flat_layer_oracle(c, medium, wave, 0, bc)
    sol = solve_forward(validate_profile([0.0], [c]), medium, wave, H, h, n_modes, bc)
    x = uniform_grid(int(cfg.get("samples", 256)))
    exact = orc(x, H)
    err = float(np.linalg.norm(sol.trace(x) - exact) / np.linalg.norm(exact))
    fem_A0 = sol.rayleigh().coefficient(0)
    eb = energy_balance(sol)
    res = {
        "c": c,
        "H": H,
        "mesh_h": h,
        "reflection": _cfloat(orc.R),
        "oracle_A0": _cfloat(orc.rayleigh_coefficient),
        "fem_A0": _cfloat(fem_A0),
        "trace_relative_error": err,
        "energy_residual": eb.residual if eb.applicable else None,
    }
    text = dump_json(res)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_converge(args) -> int:
    cfg = _load_json(args.config)
    profile = _profile(cfg)
    medium, wave, n_modes, bc = _common(cfg)
    h_list = cfg.get("h_list")
    if not isinstance(h_list, list):
        raise ValidationError("config needs 'h_list', a list of mesh sizes")
    study = convergence_study(profile, medium, wave, h_list, _get(cfg, "H"), n_modes, bc)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "h_mesh", "energy_residual", "trace_diff", "order"])
    for i, lv in enumerate(study.levels):
        order = study.orders[i - 1] if 1 <= i <= len(study.orders) else None
        w.writerow([fmt(lv.h), fmt(lv.h_mesh), fmt(lv.energy_residual), fmt(lv.trace_diff),
                    "" if order is None else fmt(order)])
    if args.out:
        _write(Path(args.out), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    print(f"observed_order,{fmt(study.observed_order)}", file=sys.stderr)
    return 0


def cmd_corner(args) -> int:
    lam = args.lam
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    if lam == 1.0:
        log.warning("lambda = 1: no transmission contrast, the spectrum degenerates to the integers")
    spec = corner_spectrum(lam, args.eta_max)
    preds = lemma1_predicates(spec)
    eta1 = leading_exponent(lam)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["lambda", "eta_1", "j", "eta", "even_integer", "A_plus", "B_plus", "A_minus", "B_minus",
            "shift_invariant", "shift_antisymmetric"]
    if args.check_determinant:
        head += ["det_direct", "det_reduced"]
    w.writerow(head)
    for j, (m, p) in enumerate(zip(spec.modes, preds)):
        row = [fmt(lam), fmt(eta1), j, fmt(m.eta), int(m.even_integer),
               fmt(m.A_plus), fmt(m.B_plus), fmt(m.A_minus), fmt(m.B_minus),
               int(p.shift_invariant), int(p.shift_antisymmetric)]
        if args.check_determinant:
            d, r = determinant_M(lam, m.eta)
            row += [fmt(d), fmt(r)]
        w.writerow(row)
    text = buf.getvalue()
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_lemma_check(args) -> int:
    if args.order < 1:
        raise ValidationError(f"--order must be >= 1, got {args.order}")
    system = constraint_matrix(args.lam, args.q1, args.q2, args.order)
    dim = nullspace_dimension(system, args.tol)
    small = smallest_singular_values(system, 5)
    hyp = args.lam != 1.0 and args.q1 != args.q2
    res = {
        "lambda": args.lam,
        "q1": args.q1,
        "q2": args.q2,
        "order": args.order,
        "tol": args.tol,
        "hypotheses_hold": hyp,
        "n_seeds": system.n_seeds,
        "nullspace_dimension": dim,
        "smallest_singular_values": [float(s) for s in small],
    }
    sys.stdout.write(dump_json(res))
    return 0


def cmd_invert(args) -> int:
    data = MeasurementData.from_csv(_read_text(args.data))
    space = SearchSpace.from_dict(_load_json(args.space))
    cfg = _load_json(args.config)
    medium, wave, n_modes, bc = _common(cfg)
    conf = ReconstructConfig(
        medium, wave, _get(cfg, "mesh_h"),
        top_k=int(cfg.get("top_k", 3)),
        max_iters=int(cfg.get("max_iters", 200)),
        refine=bool(cfg.get("refine", True)),
        n_modes=n_modes,
        gamma0_bc=bc,
        workers=int(cfg.get("workers", 1)),
    )
    res = reconstruct(data, space, conf)
    out = _out_dir(args.out)
    _write(out / "result.json", dump_json(res.to_dict(conf.top_k)))
    _write(out / "landscape.csv", res.landscape_csv())
    sys.stdout.write(res.best.to_json() + "\n")
    return 0


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gratinglab", description="Transmission gratings: forward solves, corner exponents, inversion.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("forward", help="solve the forward problem; write modes, field and trace files")
    f.add_argument("--config", required=True)
    f.add_argument("--out", default="out", help="output directory (default: out)")
    f.set_defaults(func=cmd_forward)

    c = sub.add_parser("corner", help="corner exponents and eigenfunctions as CSV")
    c.add_argument("--lambda", dest="lam", type=float, required=True)
    c.add_argument("--eta-max", type=float, default=6.0)
    c.add_argument("--check-determinant", action="store_true", help="append both determinant evaluations")
    c.add_argument("--out", help="CSV file (default: stdout)")
    c.set_defaults(func=cmd_corner)

    lc = sub.add_parser("lemma-check", help="rank test of the corner transmission relations")
    lc.add_argument("--lambda", dest="lam", type=float, required=True)
    lc.add_argument("--q1", type=float, required=True)
    lc.add_argument("--q2", type=float, required=True)
    lc.add_argument("--order", type=int, required=True)
    lc.add_argument("--tol", type=float, default=1e-8)
    lc.set_defaults(func=cmd_lemma_check)

    i = sub.add_parser("invert", help="reconstruct a profile from trace data")
    i.add_argument("--data", required=True, help="CSV with x1,x2,re_u,im_u")
    i.add_argument("--space", required=True, help="search space JSON")
    i.add_argument("--config", required=True)
    i.add_argument("--out", default="out", help="output directory (default: out)")
    i.set_defaults(func=cmd_invert)

    fo = sub.add_parser("flat-oracle", help="compare the solver against the exact flat-layer field")
    fo.add_argument("--config", required=True)
    fo.add_argument("--out", help="JSON file (default: stdout)")
    fo.set_defaults(func=cmd_flat_oracle)

    cv = sub.add_parser("converge", help="mesh refinement study of the trace")
    cv.add_argument("--config", required=True)
    cv.add_argument("--out", help="CSV file (default: stdout)")
    cv.set_defaults(func=cmd_converge)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        # ValueError also covers malformed enum values in configs
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
