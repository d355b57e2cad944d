"""Command-line entry point.

    vigildebate topo verify --n 5 --m 3 --kind ic
    vigildebate topo export --dot --n 6 --m 3 --kind ic
    vigildebate debate run --question-file qs.jsonl --config run.yaml --out runs/
    vigildebate eval pair --a runs/gvic --b runs/single --judge judge.yaml --out report.csv
    vigildebate eval ablation --dataset qs.jsonl --config run.yaml
    vigildebate report runs/cmp1 runs/cmp2

Exit codes: 0 success, 1 invariant violation or evaluation failure, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import datastore, topology
from .agents import BackendConfig, ChatCompletionBackend
from .config import content_hash, read_document
from .engine import DebateConfig, SynthesisMode, fingerprint, run_debate
from .errors import (
    AllAgentsFailed,
    DebateError,
    InvalidConfig,
    InvalidTemplate,
    MissingRun,
)
from .evaluation import (
    DEFAULT_JUDGE_PROMPT,
    EvalReport,
    FirstPositionJudge,
    LLMJudge,
    ScoreJudge,
    ablation_csv,
    ablation_table,
    format_csv,
    format_table,
    run_ablation_grid,
    run_pairwise_eval,
    write_verdicts_csv,
)

REPORT_NAME = "report.json"


# -- config assembly -----------------------------------------------------------


def load_document(path: str | None) -> dict:
    return read_document(path) if path else {}


def debate_config(doc: dict, args: argparse.Namespace) -> DebateConfig:
    section = dict(doc.get("debate", {}))
    if getattr(args, "seed", None) is not None:
        section["seed"] = args.seed
    vigilance = getattr(args, "vigilance", None)
    if vigilance is not None:
        section["vigilance_enabled"] = vigilance == "on"
    template_file = doc.get("template_file")
    if template_file:
        section.setdefault("template", read_document(template_file))
    return DebateConfig.from_mapping(section)


def make_judge(doc: dict, seed: int | None = None):
    kind = doc.get("kind", "score")
    if kind == "score":
        return ScoreJudge(
            seed=doc.get("seed", seed or 0),
            harm_weight=doc.get("harm_weight"),
            harm_skew=doc.get("harm_skew", 2.0),
            margin=doc.get("margin", 0.02),
        )
    if kind == "first":
        return FirstPositionJudge()
    if kind == "http":
        backend = ChatCompletionBackend(BackendConfig.from_mapping({**doc.get("backend", {}), "kind": "http"}))
        return LLMJudge(backend, doc.get("prompt", DEFAULT_JUDGE_PROMPT))
    raise InvalidConfig(f"unknown judge kind {kind!r}")


def announce(fp: str) -> None:
    print(f"config fingerprint: {fp}", flush=True)


# -- subcommands -----------------------------------------------------------------


def cmd_topo_verify(args) -> int:
    announce(content_hash({"kind": args.kind, "n": args.n, "m": args.m}))
    plan = topology.build_plan(args.kind, args.n, args.m)
    text, violations = topology.verification_report(plan)
    print(text)
    if plan.kind is topology.TopologyKind.INTERVAL and plan.group_size == 3 and args.n >= 3:
        same = topology.overhead_equivalence_check(args.n)
        print(f"overhead equals neighbor (2N = {2 * args.n}): {'yes' if same else 'no'}")
    return 1 if violations else 0


def cmd_topo_export(args) -> int:
    plan = topology.build_plan(args.kind, args.n, args.m)
    sys.stdout.write(topology.to_dot(plan))
    return 0


def cmd_debate_run(args) -> int:
    doc = load_document(args.config)
    config = debate_config(doc, args)
    fp = fingerprint(config)
    announce(fp)

    records = datastore.load_dataset(args.question_file, args.format)
    by_id = {r.question_id: r for r in records}
    out = Path(args.out or ".")
    run_id = args.run_id or fp
    run_dir = out / run_id
    size = args.sample if args.sample is not None else len(records)
    if (run_dir / datastore.MANIFEST_NAME).exists():
        manifest = datastore.RunManifest.load(run_dir)
        pending = datastore.resume(manifest, fp)
        print(f"resuming run {run_id}: {len(pending)} pending")
    else:
        manifest = datastore.new_manifest(run_id, fp, records, str(args.question_file), config.seed, size)
        manifest.save(run_dir)
        pending = manifest.pending()

    failed = 0
    for qid in pending:
        record = by_id[qid]
        try:
            transcript = run_debate(record.text, config, question_id=qid)
            status = "done"
        except AllAgentsFailed as exc:
            transcript = exc.transcript
            status = "failed"
            failed += 1
        datastore.persist_transcript(transcript, run_dir)
        manifest.mark(qid, status)
        manifest.save(run_dir)
    print(f"run {run_id}: {len(manifest.sampled_ids) - len(manifest.pending())} done, {failed} failed -> {run_dir}")
    return 1 if failed else 0


def final_answers(run_dir: str | Path) -> tuple[dict[str, str], dict[str, str], str]:
    files = datastore.iter_transcript_files(run_dir)
    if not files:
        raise MissingRun(f"no transcripts in {run_dir}")
    answers, questions, fps = {}, {}, set()
    for path in files:
        t = datastore.load_transcript(path)
        if not t.final_answer:
            continue
        answers[t.question_id] = t.final_answer
        questions[t.question_id] = t.question
        fps.add(t.config_fingerprint)
    return answers, questions, ",".join(sorted(fps))


def cmd_eval_pair(args) -> int:
    doc = load_document(args.judge)
    judge = make_judge(doc.get("judge", doc), args.seed)
    a_answers, questions, fp_a = final_answers(args.a)
    b_answers, _, fp_b = final_answers(args.b)
    announce(f"{fp_a} vs {fp_b}")
    records = [datastore.QuestionRecord(qid, questions[qid]) for qid in sorted(questions)]
    report = run_pairwise_eval(records, a_answers, b_answers, judge, fingerprint_a=fp_a, fingerprint_b=fp_b)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_verdicts_csv(report, out)
    report.name = out.parent.name or out.stem
    datastore.atomic_write_text(out.parent / REPORT_NAME, json.dumps(report.to_summary(), indent=2, sort_keys=True) + "\n")
    print(format_table([report.name], [report]), end="")
    if report.skipped:
        print(f"skipped {len(report.skipped)} question(s): judge failed")
    return 0


def cmd_eval_ablation(args) -> int:
    doc = load_document(args.config)
    base = debate_config(doc, args)
    if "synthesis_mode" not in doc.get("debate", {}):
        # Scored argmax returns the best initial answer whatever the topology.
        base = replace(base, synthesis_mode=SynthesisMode.AGGREGATOR)
    records = datastore.load_dataset(args.dataset, args.format)
    dataset_doc = doc.get("dataset", {})
    size = args.sample if args.sample is not None else dataset_doc.get("sample_size")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [base.seed]
    for seed in seeds:
        cfg = replace(base, seed=seed)
        announce(fingerprint(cfg))
        chosen = datastore.sample(records, size, seed) if size else records
        judge_doc = doc.get("judge", {})
        judge = make_judge(judge_doc, seed)
        rows = run_ablation_grid(chosen, cfg, judge)
        print(f"seed {seed}, {len(chosen)} questions")
        print(ablation_table(rows), end="")
        if args.out:
            datastore.atomic_write_text(Path(args.out) / f"ablation_seed{seed}.csv", ablation_csv(rows))
    return 0


def cmd_report(args) -> int:
    labels, reports = [], []
    for run_dir in sorted(args.run_dirs, key=lambda p: Path(p).name):
        path = Path(run_dir) / REPORT_NAME
        if not path.exists():
            raise MissingRun(f"no {REPORT_NAME} in {run_dir}")
        data = json.loads(path.read_text(encoding="utf-8"))
        reports.append(
            EvalReport(data["wins"], data["ties"], data["losses"], data["d_wl"],
                       fingerprint_a=data.get("fingerprint_a", ""), fingerprint_b=data.get("fingerprint_b", ""))
        )
        labels.append(Path(run_dir).name)
    print(format_table(labels, reports, label_header="Run"), end="")
    if args.out:
        datastore.atomic_write_text(args.out, format_csv(labels, reports, label_header="Run"))
    return 0


# -- parser ------------------------------------------------------------------------


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="override the seed")
    parser.add_argument("--config", default=default, help="config document (JSON or YAML)")
    parser.add_argument("--out", default=default, help="output path")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vigildebate", description="Graded-vigilance multi-agent debate toolkit")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def leaf(group, name, func, help_text):
        p = group.add_parser(name, help=help_text)
        _common(p, suppress=True)
        p.set_defaults(func=func)
        return p

    topo = sub.add_parser("topo", help="communication topologies").add_subparsers(dest="action", required=True)
    for name, func, help_text in (
        ("verify", cmd_topo_verify, "check a plan's invariants"),
        ("export", cmd_topo_export, "print the reference graph"),
    ):
        p = leaf(topo, name, func, help_text)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--m", type=int, default=3)
        p.add_argument("--kind", choices=["fc", "nc", "ic"], default="ic")
        if name == "export":
            p.add_argument("--dot", action="store_true", required=True)

    debate = sub.add_parser("debate", help="run debates").add_subparsers(dest="action", required=True)
    p = leaf(debate, "run", cmd_debate_run, "debate every question in a file")
    p.add_argument("--question-file", required=True)
    p.add_argument("--format", choices=datastore.FORMATS, default="jsonl")
    p.add_argument("--sample", type=int)
    p.add_argument("--run-id")
    p.add_argument("--vigilance", choices=["on", "off"])

    ev = sub.add_parser("eval", help="pairwise evaluation").add_subparsers(dest="action", required=True)
    p = leaf(ev, "pair", cmd_eval_pair, "judge two transcript directories")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--judge", help="judge config document")
    p.set_defaults(out="report.csv")
    p = leaf(ev, "ablation", cmd_eval_ablation, "GV x {FC, NC, IC} against a single agent")
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", choices=datastore.FORMATS, default="jsonl")
    p.add_argument("--sample", type=int)
    p.add_argument("--seeds", help="comma-separated seeds")

    p = leaf(sub, "report", cmd_report, "tabulate finished evaluation runs")
    p.add_argument("run_dirs", nargs="+")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (InvalidConfig, InvalidTemplate) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DebateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
