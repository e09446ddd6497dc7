import random

import pytest

from treeqa.errors import UngeneratableError
from treeqa.grounding import FrameRef, NavigationDirective, ground_moment, prove
from treeqa.prompts import ProviderRole
from treeqa.providers import ProviderHub
from treeqa.synth import (
    Event,
    OracleBackend,
    Relation,
    WorldSpec,
    generate_biased_suite,
    generate_suite,
    generate_task,
    generate_world,
    load_worlds,
    save_worlds,
    world_from_dict,
    world_to_dict,
)
from treeqa.tasks import QuestionType, validate_task


def oracle_session(worlds, eps=0.0):
    backend = OracleBackend(worlds, noise_epsilon=eps)
    hub = ProviderHub({role: backend for role in ProviderRole}, backoff_base_s=0.0)
    return hub.session()


def frames_for(world, ref):
    return [FrameRef(i, float(i), f"{ref}#{i}") for i in range(world.num_frames)]


# -- worlds --------------------------------------------------------------------


def test_same_seed_same_world():
    assert generate_world(42) == generate_world(42)


def test_seed_variation_changes_layout():
    assert generate_world(1) != generate_world(2)


def test_world_shape_constraints():
    world = generate_world(7, num_frames=24, num_events=8)
    frames = [e.frame for e in world.events]
    assert len(world.events) == 8
    assert all(0 <= f < 24 for f in frames)
    assert frames == sorted(frames)
    assert len(set(frames)) == len(frames)
    combos = {e.combo() for e in world.events}
    assert len(combos) == len(world.events)


def test_world_requires_three_events():
    with pytest.raises(ValueError):
        WorldSpec(seed=0, num_frames=10, events=(Event(0, "a boy", "holds", "a cup"),))


def test_world_serialization_round_trip(tmp_path):
    worlds = {f"w{i}": generate_world(i) for i in range(3)}
    assert world_from_dict(world_to_dict(worlds["w1"])) == worlds["w1"]
    path = tmp_path / "worlds.json"
    save_worlds(worlds, path)
    assert load_worlds(path) == worlds


# -- task generation --------------------------------------------------------------


def test_after_task_ground_truth_event_is_later():
    world = generate_world(11)
    task = generate_task(world, "w", Relation.AFTER, rng=random.Random(1))
    assert validate_task(task) == []
    assert task.question.startswith("What happened after ")
    assert task.question_type is QuestionType.TEMPORAL
    anchor_text = task.question[len("What happened after "):-1]
    anchor = next(e for e in world.events if e.text() == anchor_text)
    correct = next(
        e for e in world.events
        if e.text() == task.options[task.ground_truth_index].text
    )
    assert correct.frame > anchor.frame


def test_adversarial_distractors_come_from_opposite_window():
    world = generate_world(13)
    task = generate_task(
        world, "w", Relation.AFTER, adversarial=True, rng=random.Random(2)
    )
    anchor_text = task.question[len("What happened after "):-1]
    anchor = next(e for e in world.events if e.text() == anchor_text)
    by_text = {e.text(): e for e in world.events}
    real_distractors = [
        by_text[o.text]
        for o in task.options
        if o.index != task.ground_truth_index and o.text in by_text
    ]
    assert real_distractors
    assert all(e.frame < anchor.frame for e in real_distractors)


def test_non_adversarial_distractors_are_non_events():
    world = generate_world(17)
    task = generate_task(world, "w", Relation.AFTER, rng=random.Random(3))
    real = {e.text() for e in world.events}
    distractors = [
        o.text for o in task.options if o.index != task.ground_truth_index
    ]
    assert all(text not in real for text in distractors)


def test_around_task_correct_event_inside_window():
    world = generate_world(19)
    task = generate_task(world, "w", Relation.AROUND, rng=random.Random(4))
    assert task.question_type is QuestionType.CAUSAL
    anchor_text = task.question[len("What was happening while "):-1]
    anchor = next(e for e in world.events if e.text() == anchor_text)
    correct = next(
        e for e in world.events
        if e.text() == task.options[task.ground_truth_index].text
    )
    moment = ground_moment(
        anchor.frame, NavigationDirective.LOOK_AROUND, world.num_frames, 8
    )
    assert moment.start_index <= correct.frame <= moment.end_index


def test_ungeneratable_when_no_event_in_window():
    # Three events spread far apart: no second event within any 8-frame window.
    world = WorldSpec(
        seed=0,
        num_frames=64,
        events=(
            Event(0, "a boy", "holds", "a cup"),
            Event(30, "a girl", "kicks", "a ball"),
            Event(60, "a dog", "chases", "a broom"),
        ),
    )
    with pytest.raises(UngeneratableError):
        generate_task(world, "w", Relation.AROUND, rng=random.Random(0))


def test_generate_suite_deterministic_and_valid():
    worlds_a, dataset_a, _ = generate_suite(5, 20)
    worlds_b, dataset_b, _ = generate_suite(5, 20)
    assert dataset_a.tasks == dataset_b.tasks
    assert worlds_a == worlds_b
    assert all(validate_task(t) == [] for t in dataset_a.tasks)
    assert all(t.video_ref in worlds_a for t in dataset_a.tasks)


# -- oracle prover ------------------------------------------------------------------


def membership_world():
    return WorldSpec(
        seed=0,
        num_frames=24,
        events=(
            Event(3, "a dog", "chases", "a ball"),
            Event(10, "a boy", "picks up", "a balloon"),
            Event(15, "a girl", "kicks", "a ball"),
        ),
    )


def test_oracle_prove_membership_inside_and_outside():
    world = membership_world()
    session = oracle_session({"w": world})
    frames = frames_for(world, "w")
    moment = ground_moment(10, NavigationDirective.LOOK_BEHIND, 24)
    assert prove(session, "a girl kicks a ball", moment, frames) == 1.0
    assert prove(session, "a dog chases a ball", moment, frames) == 0.0


def test_oracle_prove_relation_suffix_ignored_for_claim():
    world = membership_world()
    session = oracle_session({"w": world})
    frames = frames_for(world, "w")
    moment = ground_moment(10, NavigationDirective.LOOK_BEHIND, 24)
    score = prove(
        session, "a girl kicks a ball after a boy picks up a balloon", moment, frames
    )
    assert score == 1.0


def test_oracle_prove_decomposed_claim_forms():
    world = membership_world()
    session = oracle_session({"w": world})
    frames = frames_for(world, "w")
    moment = ground_moment(10, NavigationDirective.LOOK_BEHIND, 24)
    assert prove(session, "a girl is in the scene", moment, frames) == 1.0
    assert prove(session, "someone kicks a ball", moment, frames) == 1.0
    assert prove(session, "someone chases a ball", moment, frames) == 0.0
    assert prove(session, "it is visible that a girl kicks a ball", moment, frames) == 1.0
    assert prove(session, "total gibberish claim", moment, frames) == 0.0


def test_noisy_prover_bounded_and_deterministic():
    world = membership_world()
    frames = frames_for(world, "w")
    moment = ground_moment(10, NavigationDirective.LOOK_BEHIND, 24)
    scores = []
    for _ in range(2):
        session = oracle_session({"w": world}, eps=0.05)
        scores.append(
            (
                prove(session, "a girl kicks a ball", moment, frames),
                prove(session, "a dog chases a ball", moment, frames),
            )
        )
    true_score, false_score = scores[0]
    assert scores[0] == scores[1]
    assert 0.95 <= true_score <= 1.0
    assert 0.0 <= false_score <= 0.05
    assert true_score != 1.0 or false_score != 0.0


# -- biased suite ----------------------------------------------------------------


def test_biased_suite_ground_truth_overlaps_question():
    dataset = generate_biased_suite(3, 30)
    assert len(dataset.tasks) == 30
    for task in dataset.tasks:
        assert validate_task(task) == []
        question_words = set(task.question.lower().replace("?", "").split())
        gt_words = set(task.ground_truth_text().lower().split())
        distractor_words = set()
        for option in task.options:
            if option.index != task.ground_truth_index:
                distractor_words |= set(option.text.lower().split())
        assert len(question_words & gt_words) >= 3
        assert not (question_words & distractor_words)
