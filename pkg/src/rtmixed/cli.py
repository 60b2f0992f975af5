"""Command-line entry point: ``rtmixed {fit,compare,transform,simulate,recover,report}``.

Exit codes: 0 ok, 2 schema error, 3 design error, 4 numeric error,
5 unstable estimate.
"""

import argparse
import datetime as _dt
import hashlib
import logging
import sys
from dataclasses import asdict, replace
from importlib import metadata
from pathlib import Path

from . import rng as rngmod
from .dataio import SHIFTED_LOG, TrialSchema, apply_shift_log, load_trials, observed_effects
from .dataio import validate_design
from .dataio import write_observed_effects, write_trials
from .errors import DomainError, RtMixedError
from .evidence import EvidenceConfig, compare_models, format_bf_report, write_bf_report
from .gibbs import McmcConfig, diagnose, gibbs_fit, read_draws, write_draws
from .model import PriorConfig, read_prior_config, write_kv
from .simulate import (
    LOG_PIPELINE,
    NORMAL_PIPELINE,
    SimSpec,
    generate,
    read_sim_spec,
    recovery_study,
    write_sim_spec,
)
from .summary import back_transform, summarize_effects, write_effects, write_summary

log = logging.getLogger("rtmixed")

SCALES = (NORMAL_PIPELINE, LOG_PIPELINE)


def _add_data_args(p):
    p.add_argument("--input", required=True, type=Path, help="delimited trial table")
    p.add_argument("--subject-col", default="subject")
    p.add_argument("--condition-col", default="condition")
    p.add_argument("--rt-col", default="rt")
    p.add_argument("--baseline", help="condition label coded 0 (effect = other minus this)")
    p.add_argument("--min-rt", type=float, help="drop trials faster than this (ms); off by default")
    p.add_argument("--max-rt", type=float, help="drop trials slower than this (ms); off by default")
    p.add_argument("--scale", choices=SCALES, default=NORMAL_PIPELINE)


def _add_prior_args(p):
    p.add_argument("--prior-config", type=Path, help="key = value prior file")
    p.add_argument("--shift", type=float, help="shift in ms for the log transform (200)")
    p.add_argument("--r-nu", type=float, help="scale of the g_nu prior (1/6)")
    p.add_argument("--r-delta", type=float, help="scale of the g_delta prior (1/10)")
    p.add_argument("--r-alpha", type=float, help="scale of the g_alpha prior (1)")


def _add_mcmc_args(p):
    d = McmcConfig()
    p.add_argument("--chains", type=int, default=d.n_chains)
    p.add_argument("--iters", type=int, default=d.n_iterations)
    p.add_argument("--burnin", type=int, default=d.burn_in)
    p.add_argument("--thin", type=int, default=d.thin)
    p.add_argument("--seed", type=int, default=d.seed)


def _add_evidence_args(p):
    d = EvidenceConfig()
    p.add_argument("--prior-draws", type=int, default=d.n_prior_draws)
    p.add_argument("--mc-draws", type=int, default=d.n_mc)
    p.add_argument("--prior-odds", type=float, default=d.prior_odds)


def build_parser():
    parser = argparse.ArgumentParser(prog="rtmixed", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="sample the unconstrained model and summarise effects")
    compare = sub.add_parser("compare", help="fit and compare M_+, M_u, M_1, M_0")
    for p in (fit, compare):
        _add_data_args(p)
        _add_prior_args(p)
        _add_mcmc_args(p)
        p.add_argument("--level", type=float, default=0.95)
        p.add_argument("--outdir", required=True, type=Path)
    _add_evidence_args(compare)

    tr = sub.add_parser("transform", help="write the shift-log transformed table")
    _add_data_args(tr)
    tr.add_argument("--shift", type=float, default=200.0)
    tr.add_argument("--outdir", required=True, type=Path)

    sim = sub.add_parser("simulate", help="generate a synthetic trial table")
    sim.add_argument("--config", type=Path, help="key = value simulation spec")
    sim.add_argument("--model", default="unconstrained",
                     choices=["unconstrained", "positive", "common", "null"])
    sim.add_argument("--subjects", type=int, default=40)
    sim.add_argument("--trials", type=int, default=50)
    sim.add_argument("--mu", type=float, default=1000.0)
    sim.add_argument("--sigma", type=float, default=200.0)
    sim.add_argument("--nu", type=float, default=60.0)
    sim.add_argument("--eta", type=float, default=30.0)
    sim.add_argument("--intercept-sd", type=float)
    sim.add_argument("--sim-scale", choices=["raw_normal", "shifted_lognormal"], default="raw_normal")
    sim.add_argument("--shift", type=float, default=200.0)
    sim.add_argument("--seed", type=int, default=1)
    sim.add_argument("--outdir", required=True, type=Path)

    rec = sub.add_parser("recover", help="model-recovery study from simulation specs")
    rec.add_argument("--config", type=Path, nargs="+", required=True, help="simulation spec files")
    rec.add_argument("--reps", type=int, default=10)
    rec.add_argument("--pipelines", nargs="+", choices=SCALES, default=list(SCALES))
    rec.add_argument("--jobs", type=int, default=1)
    _add_prior_args(rec)
    _add_mcmc_args(rec)
    _add_evidence_args(rec)
    rec.add_argument("--outdir", required=True, type=Path)

    rep = sub.add_parser("report", help="re-summarise saved draws without refitting")
    _add_data_args(rep)
    _add_prior_args(rep)
    rep.add_argument("--draws", required=True, type=Path)
    rep.add_argument("--level", type=float, default=0.95)
    rep.add_argument("--outdir", required=True, type=Path)
    return parser


def _prior(args):
    p = read_prior_config(args.prior_config) if args.prior_config else PriorConfig()
    over = {
        k: v
        for k, v in (
            ("shift_ms", args.shift),
            ("r_nu", args.r_nu),
            ("r_delta", args.r_delta),
            ("r_alpha", args.r_alpha),
        )
        if v is not None
    }
    return replace(p, **over)


def _mcmc(args):
    return McmcConfig(args.chains, args.iters, args.burnin, args.thin, args.seed)


def _evidence(args):
    return EvidenceConfig(
        n_mc=args.mc_draws,
        n_prior_draws=args.prior_draws,
        seed=rngmod.child_seed(args.seed, rngmod.LOGML),
        prior_odds=args.prior_odds,
    )


def _load(args, shift_ms):
    schema = TrialSchema(
        args.subject_col, args.condition_col, args.rt_col, args.baseline, args.min_rt, args.max_rt
    )
    t = load_trials(args.input, schema)
    design = validate_design(t)
    log.info("%d trials from %d subjects", design.total_trials, design.n_subjects)
    if getattr(args, "scale", NORMAL_PIPELINE) == LOG_PIPELINE:
        t = apply_shift_log(t, shift_ms)
    return t


def _outdir(path):
    path.mkdir(parents=True, exist_ok=True)
    probe = path / ".write-test"
    try:
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise DomainError(f"output directory {path} is not writable: {exc}") from exc
    return path


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _provenance(path, argv, **sections):
    items = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "version": _version(),
        "argv": " ".join(argv),
    }
    for name, obj in sections.items():
        if obj is None:
            continue
        for k, v in (asdict(obj) if hasattr(obj, "__dataclass_fields__") else obj).items():
            items[f"{name}.{k}"] = v
    write_kv(path, items)


def _summaries(out, draws, t, level):
    summ = summarize_effects(draws, t, level)
    write_effects(out / "effects.csv", summ)
    bt = back_transform(summ.nu_mean, t) if t.scale == SHIFTED_LOG else None
    write_summary(out / "summary.txt", summ, bt)
    write_observed_effects(out / "observed_effects.csv", observed_effects(t))
    return summ


def _input_info(args):
    return {"path": str(args.input), "sha256": _sha256(args.input), "scale": args.scale}


def cmd_fit(args, argv):
    p, m = _prior(args), _mcmc(args)
    out = _outdir(args.outdir)
    t = _load(args, p.shift_ms)
    draws = gibbs_fit(t, p, m)
    write_draws(out / "draws.csv", draws)
    diagnose(draws).to_csv(out / "diagnostics.csv", float_format="%.6g")
    _summaries(out, draws, t, args.level)
    _provenance(out / "provenance.txt", argv, input=_input_info(args), prior=p, mcmc=m)
    return 0


def cmd_compare(args, argv):
    p, m, ev = _prior(args), _mcmc(args), _evidence(args)
    out = _outdir(args.outdir)
    t = _load(args, p.shift_ms)
    draws = gibbs_fit(t, p, m)
    diag = diagnose(draws)
    report = compare_models(t, p, m, ev, draws=draws)
    write_draws(out / "draws.csv", draws)
    diag.to_csv(out / "diagnostics.csv", float_format="%.6g")
    _summaries(out, draws, t, args.level)
    (out / "bf_report.txt").write_text(format_bf_report(report))
    write_bf_report(out / "bf_report.kv", report)
    _provenance(
        out / "provenance.txt", argv, input=_input_info(args), prior=p, mcmc=m, evidence=ev
    )
    print(format_bf_report(report), end="")
    return 0


def cmd_transform(args, argv):
    out = _outdir(args.outdir)
    args.scale = NORMAL_PIPELINE
    t = apply_shift_log(_load(args, args.shift), args.shift)
    write_trials(out / "transformed.csv", t)
    _provenance(out / "provenance.txt", argv, input=_input_info(args), transform={"shift_ms": args.shift})
    return 0


def cmd_simulate(args, argv):
    out = _outdir(args.outdir)
    if args.config:
        spec = read_sim_spec(args.config)
    else:
        spec = SimSpec(
            true_model=args.model,
            n_subjects=args.subjects,
            trials_per_cell=args.trials,
            mu=args.mu,
            sigma=args.sigma,
            nu=args.nu,
            eta=args.eta,
            intercept_sd=args.intercept_sd,
            scale=args.sim_scale,
            shift_ms=args.shift,
            seed=args.seed,
        )
    write_trials(out / "trials.csv", generate(spec))
    write_sim_spec(out / "simspec.txt", spec)
    return 0


def cmd_recover(args, argv):
    p, m, ev = _prior(args), _mcmc(args), _evidence(args)
    out = _outdir(args.outdir)
    specs = [read_sim_spec(c) for c in args.config]
    table = recovery_study(specs, args.reps, args.pipelines, p, m, ev, n_jobs=args.jobs)
    table.to_csv(out / "recovery.csv", index=False, float_format="%.10g")
    _provenance(out / "provenance.txt", argv, prior=p, mcmc=m, evidence=ev)
    return 0


def cmd_report(args, argv):
    p = _prior(args)
    out = _outdir(args.outdir)
    t = _load(args, p.shift_ms)
    draws = read_draws(args.draws)
    _summaries(out, draws, t, args.level)
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "compare": cmd_compare,
    "transform": cmd_transform,
    "simulate": cmd_simulate,
    "recover": cmd_recover,
    "report": cmd_report,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args, argv)
    except RtMixedError as exc:
        print(f"rtmixed: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
