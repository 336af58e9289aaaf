"""Command-line front end.

Exit codes: 0 on success, 2 when a checked inequality or invariant fails,
1 on usage, parse or solver errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import blurring, composite, distill, freesets, oneshot, qmat, report
from .errors import InvariantViolation, SteinlabError, ValidationError

log = logging.getLogger("steinlab")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# parsing helpers


def parse_state(text) -> qmat.DensityOperator:
    """A state file path, an inline JSON state, or a named constructor.

    Names: ``ket0[:d]``, ``phi_plus[:d]``, ``max_mixed:d[,d...]``,
    ``diag:p0,p1,...``, ``isotropic:d:f``, ``werner:d:p``.
    """
    if isinstance(text, dict):
        return qmat.from_json_dict(text)
    text = str(text)
    path = Path(text)
    if path.suffix == ".json" or path.exists():
        return qmat.load_state(path)
    name, _, arg = text.partition(":")
    try:
        if name == "ket0":
            return qmat.ket0(int(arg or 2))
        if name in ("phi_plus", "bell"):
            return qmat.bell_phi_plus(int(arg or 2))
        if name in ("max_mixed", "tau"):
            dims = [int(x) for x in (arg or "2").split(",")]
            return qmat.maximally_mixed(dims)
        if name == "diag":
            return qmat.diagonal([float(x) for x in arg.split(",")])
        if name == "isotropic":
            d, f = arg.split(":")
            return qmat.isotropic(int(d), float(f))
        if name == "werner":
            d, p = arg.split(":")
            return qmat.werner(int(d), float(p))
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"cannot parse state {text!r}: {exc}") from exc
    raise ValidationError(f"unknown state {text!r} (not a file and not a named state)")


def parse_model(spec) -> freesets.FreeSetModel:
    """A model config dict, a JSON file, or ``ppt[:dA:dB]``, ``max_mixed[:d]``, ``full[:d]``."""
    if isinstance(spec, dict):
        return freesets.model_from_config(spec)
    spec = str(spec)
    if Path(spec).exists():
        return freesets.model_from_config(json.loads(Path(spec).read_text()))
    name, *args = spec.split(":")
    if name == "ppt":
        dA, dB = (int(a) for a in args) if args else (2, 2)
        return freesets.ppt(dA, dB)
    if name in ("max_mixed", "maxmixed", "purity"):
        return freesets.max_mixed(int(args[0]) if args else 2)
    if name == "full":
        return freesets.full(int(args[0]) if args else 2)
    raise ValidationError(f"unknown model {spec!r}")


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    schema = cfg.get("schema_version", report.SCHEMA_VERSION)
    if schema != report.SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {schema!r}")
    return cfg


def _param(args, cfg, name, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get("params", cfg).get(name, default)


# ---------------------------------------------------------------------------
# commands; each returns (results, passed, table)


def cmd_entropy(args, cfg):
    kind = _param(args, cfg, "kind", "dh")
    rho = parse_state(_param(args, cfg, "rho"))
    eps = float(_param(args, cfg, "eps", 0.1))
    sigma_spec = _param(args, cfg, "sigma")
    model_spec = _param(args, cfg, "model")
    n = int(_param(args, cfg, "n", 1))
    out = {"kind": kind}
    if kind in ("dh", "dmax", "dmax_eps", "dtilde_max", "umegaki"):
        if sigma_spec is None:
            raise UsageError(f"--sigma is required for kind {kind}")
        sigma = parse_state(sigma_spec)
        if kind == "dh":
            r = oneshot.dh_eps(rho, sigma, eps)
            out.update(value_bits=r.value_bits, beta=r.beta, certificate_gap=r.certificate_gap)
        elif kind == "dmax":
            out["value_bits"] = oneshot.dmax(rho, sigma)
        elif kind == "dmax_eps":
            out["value_bits"] = oneshot.dmax_eps_purified(rho, sigma, eps)
        elif kind == "dtilde_max":
            out["value_bits"] = oneshot.dtilde_max(rho, sigma, eps)
        else:
            out["value_bits"] = oneshot.umegaki(rho, sigma)
        return out, True, None
    if model_spec is None:
        raise UsageError(f"--model is required for kind {kind}")
    model = parse_model(model_spec)
    X = qmat.tensor_power(rho, n) if n > 1 else rho
    if kind == "dh_set":
        r = oneshot.dh_eps_composite([X], model, n, eps)
        out.update(value_bits=r.value_bits, beta=r.beta, certificate_gap=r.certificate_gap,
                   minimax_gap=r.minimax_gap)
    elif kind == "support_max":
        out["value"] = freesets.support_max(X, model, n)[0]
    elif kind == "robustness":
        c = freesets.generalized_robustness(X, model, n)
        out.update(value=c.value, log2=c.log2)
    elif kind == "rel_entropy_set":
        r = freesets.rel_entropy_to_set(X, model, n, tol=float(_param(args, cfg, "tol", 1e-7)))
        out.update(value_bits=r.value, gap=r.gap, iterations=r.iterations)
    else:
        raise UsageError(f"unknown entropy kind {kind!r}")
    return out, True, None


def cmd_blur(args, cfg):
    rho = parse_state(_param(args, cfg, "rho"))
    n = int(_param(args, cfg, "n", 2))
    noise_spec = _param(args, cfg, "noise", "tau")
    noise = qmat.maximally_mixed(rho.dims) if noise_spec == "tau" else parse_state(noise_spec)
    inp = _param(args, cfg, "input")
    X = parse_state(inp) if inp is not None else (qmat.tensor_power(rho, n) if n > 1 else rho)
    mode = {"mc": "monte_carlo"}.get(_param(args, cfg, "mode", "exact"), _param(args, cfg, "mode", "exact"))
    delta = float(_param(args, cfg, "delta", 0.5))
    spec = blurring.BlurSpec(n, delta, noise, mode=mode, samples=int(_param(args, cfg, "samples", 10000)),
                             seed=int(args.seed))
    res = blurring.blur_detail(X, spec)
    out = {"n": n, "delta": delta, "added": spec.m, "mode": mode, "stderr": res.stderr,
           "blurred_eigenvalues": np.sort(res.state.eigvalsh())[::-1]}
    Delta = _param(args, cfg, "Delta")
    if Delta is not None:
        M = float(_param(args, cfg, "M", 1.0))
        ref = qmat.tensor_power(rho, n) if n > 1 else rho
        mix = blurring.blur_mixture(X, float(Delta), noise, M=M, reference=ref)
        out.update(Delta=float(Delta), M=M, weights=mix.weights, deficit=mix.deficit,
                   mixture_eigenvalues=np.sort(mix.mixture.eigvalsh())[::-1])
    return out, True, None


def _check_decomposition(rng, trials):
    worst = 0.0
    for _ in range(trials):
        ens = composite.Ensemble(tuple(rng.dirichlet(np.ones(3))), tuple(qmat.random_state(2, rng) for _ in range(3)))
        worst = max(worst, composite.uhlmann_decompose(ens, qmat.random_state(2, rng)).residual)
    return {"max_equality_residual": worst}, worst <= 1e-7


def _random_ensemble(rng, size=3, d=2):
    return composite.Ensemble(tuple(rng.dirichlet(np.ones(size))),
                              tuple(qmat.random_state(d, rng) for _ in range(size)))


def _suite(reports):
    worst = min(r.slack for r in reports) if reports else math.inf
    return {"trials": len(reports), "min_slack": worst, "failures": sum(not r.passed for r in reports)}, \
        all(r.passed for r in reports)


LEMMAS = ("decomposition", "dmax", "dh", "continuity", "G", "datta_renner", "duality")


def cmd_check(args, cfg):
    lemma = _param(args, cfg, "lemma", "decomposition")
    trials = int(_param(args, cfg, "trials", 20))
    rng = np.random.default_rng(int(args.seed))
    if lemma == "decomposition":
        out, ok = _check_decomposition(rng, trials)
    elif lemma == "dmax":
        out, ok = _suite([composite.check_quasiconcavity_dmax(_random_ensemble(rng), qmat.random_state(2, rng), 0.2, 0.1)
                          for _ in range(trials)])
    elif lemma == "dh":
        reps = []
        for _ in range(trials):
            reps += composite.check_quasiconcavity_dh(_random_ensemble(rng), qmat.maximally_mixed(2), 0.5)
        out, ok = _suite(reps)
    elif lemma == "continuity":
        m = freesets.max_mixed(2)
        out, ok = _suite([composite.continuity_check(qmat.random_state(2, rng), qmat.random_state(2, rng), m,
                                                     1 + t % 3) for t in range(trials)])
    elif lemma == "G":
        grid = np.linspace(0.05, 0.95, 10)
        worst = math.inf
        for e in grid:
            for f in np.linspace(0.05, 0.95, 10):
                dlt = f * e
                g = oneshot.G_constant(float(e), float(dlt))
                worst = min(worst, g.simplified - g.value)
        out, ok = {"grid": 100, "min_margin": worst}, worst >= 0
    elif lemma == "datta_renner":
        out, ok = _suite([composite.check_datta_renner(qmat.random_state(2, rng), qmat.random_state(2, rng),
                                                       float(rng.uniform(0.1, 0.9))) for _ in range(trials)])
    elif lemma == "duality":
        out, ok = _suite([composite.check_dh_dmax_duality(qmat.random_state(2, rng), qmat.random_state(2, rng),
                                                          float(rng.uniform(0.05, 0.95))) for _ in range(trials)])
    else:
        raise UsageError(f"unknown lemma {lemma!r}; choose from {', '.join(LEMMAS)}")
    out["lemma"] = lemma
    return out, bool(ok), None


def cmd_axioms(args, cfg):
    model = parse_model(_param(args, cfg, "model", "ppt"))
    rep = freesets.axioms_check(model, n_max=int(_param(args, cfg, "n_max", 2)),
                                trials=int(_param(args, cfg, "trials", 50)), seed=int(args.seed))
    return rep.as_dict(), rep.all_passed, None


def _null_from_config(spec: dict) -> composite.NullHypothesisSpec:
    kind = spec.get("kind", "finite")
    if kind == "finite":
        return composite.NullHypothesisSpec.finite([parse_state(s) for s in spec["states"]])
    if kind == "ball":
        net = spec.get("net")
        return composite.NullHypothesisSpec.ball(
            parse_state(spec["center"]), float(spec["radius"]),
            net=[parse_state(s) for s in net] if net else None,
            diagonal=bool(spec.get("diagonal", False)), size=int(spec.get("size", 26)))
    raise ValidationError(f"unknown null kind {kind!r}")


def cmd_stein_scan(args, cfg):
    params = cfg.get("params", cfg)
    if "null" not in params:
        raise UsageError("stein-scan needs a config with a 'null' entry")
    null = _null_from_config(params["null"])
    model = parse_model(params.get("model", "max_mixed:2"))
    table = composite.stein_scan(null, model, int(params.get("n_max", 5)), [float(e) for e in params.get("eps_list", [0.1])],
                                 engine=params.get("engine", "auto"), n_list=params.get("n_list"), jobs=int(args.jobs))
    rows = [(r.n, r.eps, r.value_per_copy, r.target, r.gap, r.simple_per_copy, r.bound_rhs, r.bound_ok)
            for r in table.rows]
    gaps = [r.gap for r in table.rows]
    out = table.as_dict()
    out["monotone_gap"] = all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    ok = all(r.bound_ok for r in table.rows)
    return out, ok, (composite.ScanTable.CSV_HEADER, rows)


def cmd_distill_sim(args, cfg):
    params = cfg.get("params", cfg)
    needed = ("hidden_state", "model", "target", "mu", "eps_ball", "n")
    missing = [k for k in needed if k not in params]
    if missing:
        raise UsageError(f"distill-sim config is missing {', '.join(missing)}")
    extra = {k: params[k] for k in ("eps", "xi", "net_size") if k in params}
    rep = distill.universal_distill_sim(parse_state(params["hidden_state"]), parse_model(params["model"]),
                                        parse_state(params["target"]), float(params["mu"]),
                                        float(params["eps_ball"]), int(params["n"]), seed=int(args.seed), **extra)
    out = rep.as_dict()
    out["summary"] = (f"used {rep.n_used} copies ({rep.n_tomography} for tomography); "
                      f"{rep.out_copies} target copies, rate {rep.achieved_rate:.4f}, "
                      f"fidelity {rep.output_fidelity:.4f}, certificate "
                      f"{'passed' if rep.certificate.passed else 'FAILED'}")
    return out, rep.certificate.passed, None


COMMANDS = {
    "entropy": cmd_entropy,
    "blur": cmd_blur,
    "check": cmd_check,
    "axioms": cmd_axioms,
    "stein-scan": cmd_stein_scan,
    "distill-sim": cmd_distill_sim,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--out", help="output directory; JSON goes to stdout if omitted")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for grid scans")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="steinlab", description="Composite hypothesis testing and distillation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("entropy", parents=[common], help="one-shot and set divergences")
    e.add_argument("--kind", choices=["dh", "dmax", "dmax_eps", "dtilde_max", "umegaki", "dh_set",
                                      "support_max", "robustness", "rel_entropy_set"])
    e.add_argument("--eps", type=float)
    e.add_argument("--rho")
    e.add_argument("--sigma")
    e.add_argument("--model")
    e.add_argument("--n", type=int)

    b = sub.add_parser("blur", parents=[common], help="blurring channel and delta-averaged mixtures")
    b.add_argument("--rho", help="base state; the input defaults to its n-fold power")
    b.add_argument("--input", help="explicit n-copy input state")
    b.add_argument("--n", type=int)
    b.add_argument("--delta", type=float)
    b.add_argument("--Delta", type=float, help="also average over delta in (0, Delta]")
    b.add_argument("--M", type=float)
    b.add_argument("--noise", help="state file, named state, or 'tau'")
    b.add_argument("--mode", choices=["exact", "mc", "monte_carlo"])
    b.add_argument("--samples", type=int)

    c = sub.add_parser("check", parents=[common], help="randomised inequality suites")
    c.add_argument("--lemma", choices=LEMMAS)
    c.add_argument("--trials", type=int)

    a = sub.add_parser("axioms", parents=[common], help="randomised free-set axiom checks")
    a.add_argument("--model")
    a.add_argument("--n-max", dest="n_max", type=int)
    a.add_argument("--trials", type=int)

    sub.add_parser("stein-scan", parents=[common], help="composite Stein-exponent scan (config driven)")
    sub.add_parser("distill-sim", parents=[common], help="universal distillation simulation (config driven)")
    return p


def run(argv=None, stdout=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        results, passed, table = COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except InvariantViolation as exc:
        print(f"invariant failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (SteinlabError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    echo = {k: v for k, v in vars(args).items() if k not in ("verbose", "jobs", "out")}
    doc = {
        "schema_version": report.SCHEMA_VERSION,
        "command": args.command,
        "config": {"args": echo, "file": cfg},
        "seed": args.seed,
        "passed": bool(passed),
        "results": results,
    }
    try:
        report.emit_report(doc, args.out, name=args.command.replace("-", "_"), table=table, stream=stdout)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if passed else EXIT_FAIL


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
