import json

import pytest

from treeqa.config import RunConfig, load_config
from treeqa.errors import ConfigError, GroundingError, MismatchedDatasetsError
from treeqa.harness import (
    DirectoryFrameCatalog,
    WorldFrameCatalog,
    accuracy_from_traces,
    build_hub,
    compare_runs,
    load_trace,
    prune_events,
    render_comparison,
    render_report,
    run_eval,
    sample_video_frames,
)
from treeqa.grounding import FrameRef
from treeqa.synth import generate_suite
from treeqa.tasks import Dataset

# -- config ----------------------------------------------------------------------


def test_config_defaults_follow_reported_setup():
    config = RunConfig()
    config.validate()
    assert config.frames_per_video == 24
    assert config.max_depth == 5
    assert config.prover_frame_count == 8
    assert config.look_around_window == 8


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "[run]\n"
        "frames_per_video = 16\n"
        "max_depth = 3\n"
        "grounding_mode = full_video\n"
        "noise_epsilon = 0.05\n"
        "\n"
        "[provider.prover]\n"
        "endpoint_url = http://localhost:9000/v1/chat/completions\n"
        "model_id = prover-model\n"
        "api_key_env = PROVER_KEY\n",
        encoding="utf-8",
    )
    config = load_config(path)
    assert config.frames_per_video == 16
    assert config.max_depth == 3
    assert config.grounding_mode == "full_video"
    assert config.providers["prover"].model_id == "prover-model"
    assert config.providers["prover"].api_key_env == "PROVER_KEY"


def test_config_rejects_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig(max_depth=0).validate()
    with pytest.raises(ConfigError):
        RunConfig(grounding_mode="sideways").validate()
    path = tmp_path / "bad.ini"
    path.write_text("[run]\nmax_depth = soon\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)
    missing = tmp_path / "absent.ini"
    with pytest.raises(ConfigError):
        load_config(missing)


def test_config_digest_tracks_content():
    base = RunConfig()
    assert base.digest() == RunConfig().digest()
    assert base.digest() != RunConfig(max_depth=4).digest()


# -- catalogs and sampling ----------------------------------------------------------


def test_sample_video_frames_reindexes():
    frames = [FrameRef(i, float(i), f"v#{i}") for i in range(48)]
    sampled = sample_video_frames(frames, 24)
    assert len(sampled) == 24
    assert [f.index for f in sampled] == list(range(24))
    assert sampled[0].ref == "v#0" and sampled[-1].ref == "v#47"


def test_directory_catalog(tmp_path):
    video = tmp_path / "vid1"
    video.mkdir()
    for i in range(5):
        (video / f"frame_{i:03d}.png").write_bytes(b"")
    catalog = DirectoryFrameCatalog(tmp_path)
    frames = catalog.frames("vid1")
    assert len(frames) == 5
    assert frames[2].ref.endswith("frame_002.png")
    with pytest.raises(GroundingError):
        catalog.frames("missing")


# -- end-to-end oracle runs -----------------------------------------------------------


def oracle_setup(seed=101, n=12, adversarial=False, **config_overrides):
    worlds, dataset, _ = generate_suite(seed, n, adversarial=adversarial)
    config = RunConfig(noise_epsilon=config_overrides.pop("noise_epsilon", 0.0),
                       **config_overrides)
    hub = build_hub(config, provider="oracle", worlds=worlds)
    catalog = WorldFrameCatalog(worlds)
    return dataset, hub, config, catalog


def test_run_eval_grounded_oracle_is_perfect():
    dataset, hub, config, catalog = oracle_setup()
    outcome = run_eval(dataset, hub, config, catalog)
    report = outcome.report
    assert report.answered == len(dataset.tasks)
    assert report.accuracy == 1.0
    assert report.failed == []
    assert set(report.per_type) == {"Temporal", "Causal"}
    assert report.calls_by_role["decomposer"] > 0


def test_report_accuracy_recomputable_from_traces():
    dataset, hub, config, catalog = oracle_setup(seed=7, n=10)
    outcome = run_eval(dataset, hub, config, catalog)
    answered, correct = accuracy_from_traces(list(outcome.traces.values()))
    assert answered == outcome.report.answered
    assert correct == outcome.report.correct


def test_full_video_mode_forces_whole_video_moment():
    dataset, hub, config, catalog = oracle_setup(grounding_mode="full_video")
    outcome = run_eval(dataset, hub, config, catalog)
    for trace in outcome.traces.values():
        moment = trace["call_counts"]["moment"]
        assert moment["start"] == 0
        assert moment["end"] == config.frames_per_video - 1


def test_rerun_is_deterministic():
    reports = []
    for _ in range(2):
        dataset, hub, config, catalog = oracle_setup(seed=33, n=8)
        outcome = run_eval(dataset, hub, config, catalog)
        reports.append(outcome.report.canonical_bytes())
    assert reports[0] == reports[1]


def test_warm_cache_reissues_zero_backend_calls(tmp_path):
    worlds, dataset, _ = generate_suite(55, 6)
    config = RunConfig(cache_dir=str(tmp_path / "cache"))
    catalog = WorldFrameCatalog(worlds)
    hub = build_hub(config, provider="oracle", worlds=worlds)
    cold = run_eval(dataset, hub, config, catalog)
    assert cold.report.backend_calls > 0

    hub = build_hub(config, provider="oracle", worlds=worlds)
    warm = run_eval(dataset, hub, config, catalog)
    assert warm.report.backend_calls == 0
    assert warm.report.canonical_bytes() == cold.report.canonical_bytes()


def test_caption_dir_skips_captioner_on_second_run(tmp_path):
    worlds, dataset, _ = generate_suite(56, 5)
    config = RunConfig(captions_dir=str(tmp_path / "captions"))
    catalog = WorldFrameCatalog(worlds)

    hub = build_hub(config, provider="oracle", worlds=worlds)
    first = run_eval(dataset, hub, config, catalog)
    assert first.report.calls_by_role["captioner"] > 0

    hub = build_hub(config, provider="oracle", worlds=worlds)
    second = run_eval(dataset, hub, config, catalog)
    assert "captioner" not in second.report.calls_by_role
    assert second.report.accuracy == first.report.accuracy


def test_forest_role_counts_reconcile_with_transcript():
    from treeqa.harness import evaluate_task, sample_video_frames as sample

    worlds, dataset, _ = generate_suite(57, 1)
    config = RunConfig()
    hub = build_hub(config, provider="oracle", worlds=worlds)
    task = dataset.tasks[0]
    frames = sample(WorldFrameCatalog(worlds).frames(task.video_ref),
                    config.frames_per_video)
    forest, transcript = evaluate_task(task, hub, config, frames)
    assert forest.call_counts["by_role"] == transcript.count_by_role()
    assert len(transcript) == sum(forest.call_counts["by_role"].values())


def test_gt_intervals_mode_bypasses_retrieval():
    worlds, dataset, _ = generate_suite(61, 6)
    config = RunConfig(grounding_mode="gt_intervals")
    hub = build_hub(config, provider="oracle", worlds=worlds)
    catalog = WorldFrameCatalog(worlds)
    intervals = {t.id: (0.0, 23.0) for t in dataset.tasks}
    outcome = run_eval(dataset, hub, config, catalog, gt_intervals=intervals)
    assert outcome.report.failed == []
    # No retrieval, captioning, or navigation calls in this mode.
    for role in ("retriever", "captioner", "navigator", "fact_extractor"):
        assert role not in outcome.report.calls_by_role


def test_gt_intervals_missing_entry_fails_that_task():
    worlds, dataset, _ = generate_suite(62, 4)
    config = RunConfig(grounding_mode="gt_intervals")
    hub = build_hub(config, provider="oracle", worlds=worlds)
    catalog = WorldFrameCatalog(worlds)
    intervals = {t.id: (0.0, 23.0) for t in dataset.tasks[1:]}
    outcome = run_eval(dataset, hub, config, catalog, gt_intervals=intervals)
    assert [f["task_id"] for f in outcome.report.failed] == [dataset.tasks[0].id]
    assert outcome.report.answered == len(dataset.tasks) - 1


def test_unresolvable_video_marks_task_failed():
    worlds, dataset, _ = generate_suite(63, 4)
    config = RunConfig()
    hub = build_hub(config, provider="oracle", worlds=worlds)
    catalog = WorldFrameCatalog({})  # nothing resolvable
    outcome = run_eval(dataset, hub, config, catalog)
    assert len(outcome.report.failed) == len(dataset.tasks)
    assert outcome.report.accuracy is None


def test_concurrent_run_matches_sequential():
    dataset, hub, config, catalog = oracle_setup(seed=77, n=8)
    sequential = run_eval(dataset, hub, config, catalog)
    dataset, hub, config, catalog = oracle_setup(seed=77, n=8, concurrency=4)
    concurrent = run_eval(dataset, hub, config, catalog)
    assert concurrent.report.canonical_bytes() == sequential.report.canonical_bytes()


# -- grounded vs full video, dynamic vs static ------------------------------------------


def test_grounding_beats_full_video_on_adversarial_suite():
    worlds, dataset, _ = generate_suite(909, 40, adversarial=True)
    catalog = WorldFrameCatalog(worlds)

    grounded_config = RunConfig(noise_epsilon=0.05)
    hub = build_hub(grounded_config, provider="oracle", worlds=worlds)
    grounded = run_eval(dataset, hub, grounded_config, catalog)

    full_config = RunConfig(noise_epsilon=0.05, grounding_mode="full_video")
    hub = build_hub(full_config, provider="oracle", worlds=worlds)
    full = run_eval(dataset, hub, full_config, catalog)

    delta = compare_runs(full.report, grounded.report)
    assert delta["accuracy_delta"] is not None
    assert delta["accuracy_delta"] >= 0.10
    assert grounded.report.accuracy > full.report.accuracy


def test_dynamic_expansion_saves_decompositions():
    worlds, dataset, _ = generate_suite(911, 10)
    catalog = WorldFrameCatalog(worlds)

    static_config = RunConfig(noise_epsilon=0.05, expansion="static")
    hub = build_hub(static_config, provider="oracle", worlds=worlds)
    static = run_eval(dataset, hub, static_config, catalog)

    dynamic_config = RunConfig(noise_epsilon=0.05)
    hub = build_hub(dynamic_config, provider="oracle", worlds=worlds)
    dynamic = run_eval(dataset, hub, dynamic_config, catalog)

    assert static.report.avg_decompose_per_root == 15.0
    assert dynamic.report.decompose_calls < static.report.decompose_calls
    delta = compare_runs(static.report, dynamic.report)
    assert delta["decompose_calls_delta"] < 0


# -- reports, traces, comparison -----------------------------------------------------


def test_compare_identical_reports_zero_deltas():
    dataset, hub, config, catalog = oracle_setup(seed=21, n=6)
    outcome = run_eval(dataset, hub, config, catalog)
    delta = compare_runs(outcome.report, outcome.report)
    assert delta["accuracy_delta"] == 0.0
    assert delta["decompose_calls_delta"] == 0
    assert all(row["delta"] == 0.0 for row in delta["per_type"].values())
    assert "| type | A | B | delta |" in render_comparison(delta)


def test_compare_mismatched_datasets_rejected():
    dataset, hub, config, catalog = oracle_setup(seed=22, n=4)
    outcome = run_eval(dataset, hub, config, catalog)
    other = outcome.report.to_dict()
    other["dataset"] = "different"
    with pytest.raises(MismatchedDatasetsError):
        compare_runs(outcome.report.to_dict(), other)


def test_outputs_written_and_trace_round_trip(tmp_path):
    dataset, hub, config, catalog = oracle_setup(seed=23, n=5)
    outcome = run_eval(dataset, hub, config, catalog, out_dir=tmp_path)
    report_path = tmp_path / "report.json"
    assert report_path.exists()
    assert json.loads(report_path.read_text())["n_tasks"] == 5
    trace_files = sorted((tmp_path / "traces").glob("*.json"))
    assert len(trace_files) == 5
    reloaded = load_trace(trace_files[0])
    assert reloaded == outcome.traces[reloaded["task_id"]]
    text = (tmp_path / "report.md").read_text()
    assert "| type | n | correct | accuracy |" in text


def test_prune_events_expose_direct_and_provisional_proof():
    worlds, dataset, _ = generate_suite(913, 10)
    config = RunConfig(noise_epsilon=0.05)
    hub = build_hub(config, provider="oracle", worlds=worlds)
    outcome = run_eval(dataset, hub, config, WorldFrameCatalog(worlds))
    events = [e for trace in outcome.traces.values() for e in prune_events(trace)]
    assert events, "noisy oracle run should prune somewhere"
    for _node_id, direct, provisional in events:
        assert provisional < direct


def test_render_report_stable_columns():
    dataset, hub, config, catalog = oracle_setup(seed=24, n=4)
    outcome = run_eval(dataset, hub, config, catalog)
    lines = render_report(outcome.report).splitlines()
    assert "| type | n | correct | accuracy |" in lines
    assert "| role | calls |" in lines
