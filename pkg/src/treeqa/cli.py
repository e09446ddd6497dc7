"""Command-line surface: eval, debias, probe-bias, synth gen, trace show, compare.

Exit codes: 0 success, 1 configuration error, 2 every task failed, 3 failures
above the configured threshold.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import debias as debias_mod
from . import harness, synth, tasks
from .config import EXPANSION_MODES, GROUNDING_MODES, PROVER_KINDS, RunConfig, load_config
from .errors import ConfigError, MismatchedDatasetsError, SchemaError


def _load_run_config(config_path: str | None, **overrides) -> RunConfig:
    config = load_config(config_path) if config_path else RunConfig()
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    config.validate()
    return config


def _fail_config(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Entailment-tree reasoning over video QA tasks."""


@main.command("eval")
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--provider", type=click.Choice(["oracle", "http"]), default="oracle",
              show_default=True)
@click.option("--worlds", "worlds_path", type=click.Path(), default=None,
              help="World file for synthetic video refs (oracle provider).")
@click.option("--frames-root", type=click.Path(), default=None,
              help="Directory of pre-extracted frames, one subdirectory per video.")
@click.option("--grounding-mode", type=click.Choice(GROUNDING_MODES), default=None)
@click.option("--expansion", type=click.Choice(EXPANSION_MODES), default=None)
@click.option("--max-depth", type=int, default=None)
@click.option("--frames-per-video", type=int, default=None)
@click.option("--prover-kind", type=click.Choice(PROVER_KINDS), default=None)
@click.option("--prover-frame-count", type=int, default=None)
@click.option("--noise-epsilon", type=float, default=None)
@click.option("--cache-dir", type=click.Path(), default=None)
@click.option("--concurrency", type=int, default=None)
@click.option("--gt-intervals", "gt_intervals_path", type=click.Path(), default=None,
              help="JSON map of task id to [start_s, end_s] (gt_intervals mode).")
def eval_cmd(dataset_path, out_dir, config_path, provider, worlds_path, frames_root,
             gt_intervals_path, **overrides):
    """Evaluate a dataset and write report plus per-task traces."""
    try:
        config = _load_run_config(config_path, **overrides)
        dataset = tasks.load_dataset(dataset_path)
        worlds = synth.load_worlds(worlds_path) if worlds_path else {}
        if frames_root:
            catalog = harness.DirectoryFrameCatalog(frames_root)
        elif worlds:
            catalog = harness.WorldFrameCatalog(worlds)
        elif provider == "oracle":
            _fail_config("oracle provider needs --worlds (or --frames-root)")
        else:
            _fail_config("--frames-root is required without synthetic worlds")
        gt_intervals = None
        if gt_intervals_path:
            raw = json.loads(Path(gt_intervals_path).read_text(encoding="utf-8"))
            gt_intervals = {k: (float(v[0]), float(v[1])) for k, v in raw.items()}
        elif config.grounding_mode == "gt_intervals":
            _fail_config("gt_intervals mode needs --gt-intervals")
        hub = harness.build_hub(config, provider=provider, worlds=worlds)
    except (ConfigError, SchemaError, OSError, ValueError) as exc:
        _fail_config(str(exc))

    outcome = harness.run_eval(
        dataset, hub, config, catalog, gt_intervals=gt_intervals, out_dir=out_dir
    )
    report = outcome.report
    click.echo(harness.render_report(report))
    click.echo(f"traces and report written to {out_dir}")
    if report.n_tasks and len(report.failed) == report.n_tasks:
        sys.exit(2)
    if report.n_tasks and len(report.failed) / report.n_tasks > config.failure_threshold:
        sys.exit(3)


@main.command("debias")
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--provider", type=click.Choice(["oracle", "http"]), default="oracle",
              show_default=True)
@click.option("--max-attempts", type=int, default=3, show_default=True)
def debias_cmd(dataset_path, out_path, config_path, provider, max_attempts):
    """Rewrite a dataset's answer distractors, keeping questions and answers."""
    try:
        config = _load_run_config(config_path)
        dataset = tasks.load_dataset(dataset_path)
        hub = harness.build_hub(config, provider=provider)
    except (ConfigError, SchemaError, OSError) as exc:
        _fail_config(str(exc))
    rewritten, kept = debias_mod.rewrite_dataset(dataset, hub, max_attempts=max_attempts)
    tasks.save_dataset(rewritten, out_path)
    click.echo(
        f"rewrote {len(rewritten.tasks) - len(kept)}/{len(rewritten.tasks)} tasks "
        f"-> {out_path}"
    )
    if kept:
        click.echo(f"kept original (no ground truth or failed rewrite): {', '.join(kept)}")
    if kept and len(kept) == len(rewritten.tasks):
        sys.exit(2)


@main.command("probe-bias")
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--provider", type=click.Choice(["oracle", "http"]), default="oracle",
              show_default=True)
def probe_bias_cmd(dataset_path, out_path, config_path, provider):
    """Measure blind (no-video) accuracy, a proxy for textual shortcuts."""
    try:
        config = _load_run_config(config_path)
        dataset = tasks.load_dataset(dataset_path)
        hub = harness.build_hub(config, provider=provider)
    except (ConfigError, SchemaError, OSError) as exc:
        _fail_config(str(exc))
    report, attached = debias_mod.probe_dataset(dataset, hub)
    doc = report.to_dict()
    doc["frames_attached"] = attached
    text = json.dumps(doc, indent=1, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    click.echo(text)


@main.group("synth")
def synth_group():
    """Synthetic world and task generation."""


@synth_group.command("gen")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tasks", "n_tasks", type=int, default=50, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--adversarial", is_flag=True, default=False,
              help="Distractors are real events from the misleading timeline side.")
@click.option("--biased", is_flag=True, default=False,
              help="Emit the textual-shortcut suite instead of timeline worlds.")
@click.option("--n-options", type=int, default=4, show_default=True)
@click.option("--num-frames", type=int, default=24, show_default=True)
def synth_gen(seed, n_tasks, out_dir, adversarial, biased, n_options, num_frames):
    """Generate a task suite (and its worlds) in the canonical dataset format."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if biased:
        dataset = synth.generate_biased_suite(seed, n_tasks, n_options=n_options)
        tasks.save_dataset(dataset, out / "tasks.jsonl")
        click.echo(f"wrote {len(dataset.tasks)} biased tasks to {out / 'tasks.jsonl'}")
        return
    worlds, dataset, resamples = synth.generate_suite(
        seed, n_tasks, adversarial=adversarial, n_options=n_options,
        num_frames=num_frames,
    )
    tasks.save_dataset(dataset, out / "tasks.jsonl")
    synth.save_worlds(worlds, out / "worlds.json")
    click.echo(
        f"wrote {len(dataset.tasks)} tasks ({resamples} resamples) and "
        f"{len(worlds)} worlds to {out}"
    )


@main.group("trace")
def trace_group():
    """Inspect per-task trace files."""


@trace_group.command("show")
@click.argument("trace_path", type=click.Path())
def trace_show(trace_path):
    """Pretty-print one entailment forest trace."""
    try:
        doc = harness.load_trace(trace_path)
    except (OSError, json.JSONDecodeError) as exc:
        _fail_config(str(exc))
    click.echo(f"task {doc['task_id']}  selected={doc['selected_index']}"
               + (f"  ground_truth={doc['ground_truth_index']}"
                  if doc.get("ground_truth_index") is not None else ""))

    def show(node_id: str, indent: int):
        node = doc["nodes"][node_id]
        proof = "-" if node["proof"] is None else f"{node['proof']:.3f}"
        line = (f"{'  ' * indent}[{node_id}] final={node['final']:.3f} "
                f"direct={node['direct']:.3f} proof={proof} ({node['status']}) "
                f"{node['text']}")
        click.echo(line)
        record = node.get("pruned_record")
        if record and record.get("reason") == "score_prune":
            click.echo(
                f"{'  ' * (indent + 1)}pruned: p0={record['provisional_proof']:.3f} "
                f"< direct={node['direct']:.3f}"
            )
        for child in node["children"]:
            show(child, indent + 1)

    for root in doc["roots"]:
        show(root, 0)
    events = harness.prune_events(doc)
    click.echo(f"{len(events)} prune event(s)")


@main.command("compare")
@click.argument("report_a", type=click.Path())
@click.argument("report_b", type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None)
def compare_cmd(report_a, report_b, out_path):
    """Delta table between two eval reports over the same dataset."""
    try:
        doc_a = json.loads(Path(report_a).read_text(encoding="utf-8"))
        doc_b = json.loads(Path(report_b).read_text(encoding="utf-8"))
        delta = harness.compare_runs(doc_a, doc_b)
    except (OSError, json.JSONDecodeError, MismatchedDatasetsError, KeyError) as exc:
        _fail_config(str(exc))
    text = harness.render_comparison(delta)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    click.echo(text)


if __name__ == "__main__":
    main()
