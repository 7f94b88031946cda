"""``readtrace`` command line: one subcommand per pipeline stage.

Exit status: 0 on success, 1 when inputs fail validation, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import clustering, encoding, engagement, ingest, metrics, pipelines, report, scales, sessions, synth
from .config import Config

logger = logging.getLogger("readtrace")


def _config(args: argparse.Namespace) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    return cfg.updated(
        gap_ms=args.gap_ms,
        alpha=args.alpha,
        k=getattr(args, "k", None),
        utc_offset_minutes=args.utc_offset_minutes,
    )


def _events(args: argparse.Namespace, cfg: Config) -> dict[str, list[sessions.Session]]:
    fmt = args.events_format or ingest.format_from_path(args.events)
    streams = ingest.parse_events(args.events, fmt)
    return sessions.sessionize_all(streams, cfg.gap_ms)


def _open_out(path: str):
    return open(path, "w", encoding="utf-8", newline="")


def cmd_sessionize(args: argparse.Namespace, cfg: Config) -> str:
    by_student = _events(args, cfg)
    with _open_out(args.out) as fh:
        sessions.write_sessions(by_student, fh)
    return f"{sum(map(len, by_student.values()))} sessions for {len(by_student)} students -> {args.out}"


def cmd_encode(args: argparse.Namespace, cfg: Config) -> str:
    by_student = _events(args, cfg)
    n = 0
    with _open_out(args.out) as fh:
        fh.write("student_id,material_id,session_index,sequence\n")
        for sid in sorted(by_student):
            for idx, s in enumerate(by_student[sid]):
                seq = encoding.encode(s, cfg.append_terminal_gap, cfg.thresholds)
                if not args.raw:
                    seq = encoding.collapse_jumps(seq)
                fh.write(f"{sid},{s.material_id},{idx},{seq.tokens}\n")
                n += 1
    return f"{n} sequences -> {args.out}"


def cmd_metrics(args: argparse.Namespace, cfg: Config) -> str:
    by_student = _events(args, cfg)
    result = metrics.compute_all(by_student, cfg.thresholds)
    with _open_out(args.out) as fh:
        metrics.write_metrics(result, fh)
    return f"metrics for {len(result)} students -> {args.out}"


def cmd_engagement(args: argparse.Namespace, cfg: Config) -> str:
    by_student = _events(args, cfg)
    manifest = ingest.parse_manifest(args.materials)
    subs, scores = engagement.compute_engagement(by_student, manifest, cfg.engagement)
    with _open_out(args.out) as fh:
        engagement.write_engagement(subs, scores, fh)
    return f"engagement for {len(scores)} students -> {args.out}"


def cmd_scales(args: argparse.Namespace, cfg: Config) -> str:
    responses = ingest.parse_questionnaire(args.questionnaire)
    scored = scales.score_all(responses)
    with _open_out(args.out) as fh:
        scales.write_scales(scored, fh)
    alphas = scales.reliability(responses)
    if args.reliability:
        Path(args.reliability).write_text(json.dumps(alphas, indent=2) + "\n", encoding="utf-8")
    shown = ", ".join(f"{k}={v:.2f}" if v is not None else f"{k}=n/a" for k, v in alphas.items())
    return f"scales for {len(scored)} students -> {args.out} (alpha: {shown})"


def cmd_cluster(args: argparse.Namespace, cfg: Config) -> str:
    if args.profiles:
        profiles = pipelines.read_profiles(args.profiles)
    else:
        joined = pipelines.join_profiles(metrics=metrics.read_metrics(args.metrics), require=("metrics",))
        profiles = joined.profiles
    names = [pipelines.METRIC_LABELS.get(f, f) for f in cfg.cluster_features]
    usable = [p for p in profiles if all(p.value(n) is not None for n in names)]
    matrix = [[p.value(n) for n in names] for p in usable]
    assignment = clustering.ward_cluster(clustering.znorm(matrix, names), cfg.k)
    with _open_out(args.out) as fh:
        clustering.write_assignments([p.student_id for p in usable], assignment, fh)
    if args.tree:
        with _open_out(args.tree) as fh:
            clustering.write_merge_tree(assignment, fh)
    return f"{len(usable)} students in {cfg.k} clusters of sizes {assignment.sizes} -> {args.out}"


def _report_target(out_dir: Path, name: str, fmt: str) -> Path:
    return out_dir / {"json": f"{name}.json", "markdown": f"{name}.md", "csv": name}[fmt]


def cmd_analyze(args: argparse.Namespace, cfg: Config) -> str:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reliability = None
    if args.profiles:
        profiles = pipelines.read_profiles(args.profiles)
        attrition: dict = {}
    else:
        missing = [f for f in ("events", "materials", "questionnaire", "grades") if not getattr(args, f)]
        if missing:
            raise _Usage(f"analyze needs --profiles or all of --events/--materials/--questionnaire/--grades (missing {missing})")
        fmt = args.events_format or ingest.format_from_path(args.events)
        inputs = pipelines.load_inputs(args.events, args.materials, args.questionnaire, args.grades, cfg, fmt)
        need = pipelines.SCALE_IDS if args.question == "rq1" else ("DECI", "DECE")
        joined = pipelines.join_profiles(
            inputs.metrics, inputs.engagement, inputs.scales, inputs.grades, require_scales=need
        )
        profiles, attrition, reliability = joined.profiles, joined.attrition, inputs.reliability
        with _open_out(str(out_dir / "profiles.csv")) as fh:
            pipelines.write_profiles(profiles, fh)
    if args.question == "rq1":
        result = pipelines.run_rq1(profiles, cfg, reliability, attrition)
    else:
        result = pipelines.run_rq2(profiles, cfg, attrition)
    files = report.emit_report(result, args.format, _report_target(out_dir, args.question, args.format))
    return f"{args.question}: n={result['n']}, {len(files)} file(s) under {out_dir}"


def cmd_synth(args: argparse.Namespace, cfg: Config) -> str:
    mix = synth.parse_mix(args.mix)
    planted = synth.REFERENCE_GRADE_MODEL
    if args.noise_sd is not None:
        planted = synth.PlantedModel(**{**planted.__dict__, "noise_sd": args.noise_sd})
    cohort = synth.gen_cohort(args.n, mix, planted, args.seed, activity=args.activity)
    paths = cohort.write(args.out_dir)
    return f"{args.n} students, {len(cohort.events)} events -> {', '.join(str(p) for p in paths.values())}"


def cmd_report(args: argparse.Namespace, cfg: Config) -> str:
    data = json.loads(Path(args.input).read_text(encoding="utf-8"))
    files = report.emit_report(data, args.format, args.out)
    return f"{len(files)} file(s) written"


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--gap-ms", type=int, help="session gap threshold (default 360000)")
    common.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    common.add_argument("--utc-offset-minutes", type=int, help="time zone offset for reading days")
    common.add_argument("-v", "--verbose", action="store_true")

    events = argparse.ArgumentParser(add_help=False)
    events.add_argument("--events", required=True, help="events CSV or JSONL")
    events.add_argument("--events-format", choices=("csv", "jsonl"))

    parser = argparse.ArgumentParser(prog="readtrace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, parents: Sequence[argparse.ArgumentParser], help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=list(parents), help=help)
        p.set_defaults(func=func)
        return p

    p = add("sessionize", cmd_sessionize, [common, events], "split event logs into sessions")
    p.add_argument("--out", required=True)
    p = add("encode", cmd_encode, [common, events], "encode sessions as symbol sequences")
    p.add_argument("--out", required=True)
    p.add_argument("--raw", action="store_true", help="skip complete-jump recoding")
    p = add("metrics", cmd_metrics, [common, events], "per-student sequence metrics")
    p.add_argument("--out", required=True)
    p = add("engagement", cmd_engagement, [common, events], "engagement indicator")
    p.add_argument("--materials", required=True, help="material manifest CSV")
    p.add_argument("--out", required=True)
    p = add("scales", cmd_scales, [common], "questionnaire scale scores")
    p.add_argument("--questionnaire", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reliability", help="write Cronbach's alpha per scale as JSON")
    p = add("cluster", cmd_cluster, [common], "Ward clustering of metric profiles")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--metrics")
    src.add_argument("--profiles")
    p.add_argument("--k", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--tree", help="write the merge tree as JSON")
    p = add("analyze", cmd_analyze, [common], "run an analysis workflow")
    p.add_argument("question", choices=("rq1", "rq2"))
    p.add_argument("--profiles")
    p.add_argument("--events")
    p.add_argument("--events-format", choices=("csv", "jsonl"))
    p.add_argument("--materials")
    p.add_argument("--questionnaire")
    p.add_argument("--grades")
    p.add_argument("--k", type=int)
    p.add_argument("--format", choices=report.FORMATS, default="json")
    p.add_argument("--out-dir", required=True)
    p = add("synth", cmd_synth, [common], "generate a synthetic cohort")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mix", default="balanced=0.25,sticky=0.25,jumpy=0.25,quick=0.25")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--activity", type=float, default=1.0)
    p.add_argument("--noise-sd", type=float)
    p.add_argument("--out-dir", required=True)
    p = add("report", cmd_report, [common], "re-render a JSON report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=report.FORMATS, required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        print(args.func(args, cfg))
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"readtrace: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"readtrace: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
