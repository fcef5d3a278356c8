"""Corpus generation, injection, scoring and the drift protocol."""

from __future__ import annotations

import csv
import json
import math

import pytest

from driftguard.config import from_dict
from driftguard.eval_harness import (
    AttackTemplate,
    BatchMetrics,
    EmptyPool,
    InjectionPlan,
    TrafficProfile,
    agents_digest,
    batch_metrics,
    classify,
    clone_agents,
    fp_quartile_means,
    generate_bootstrap,
    generate_synthetic_clean,
    inject,
    labeled_records,
    load_attack_pool,
    read_labeled_stream,
    run_drift_experiment,
    run_experiment,
    stream_digest,
    write_labeled_stream,
    write_metrics_csv,
)
from driftguard.evidence import INTRUSIVE, NORMAL
from driftguard.log_ingest import parse_line, parse_timestamp


def bracket_time(line: str) -> str:
    return line.split("[", 1)[1].split("]", 1)[0]


def small_plan(n_sessions=3, **kwargs):
    defaults = dict(
        n_sessions=n_sessions,
        reqs_per_session=4.0,
        known_pool=load_attack_pool("known"),
        novel_pool=load_attack_pool("novel"),
        novel_fraction=0.5,
        rng_seed=5,
    )
    defaults.update(kwargs)
    return InjectionPlan(**defaults)


class TestAttackPools:
    def test_both_pools_load_and_are_disjoint(self):
        known = load_attack_pool("known")
        novel = load_attack_pool("novel")
        assert len(known) >= 10
        assert len(novel) >= 10
        assert not {(t.method, t.url) for t in known} & {
            (t.method, t.url) for t in novel
        }

    def test_templates_are_well_formed(self):
        for name in ("known", "novel"):
            for template in load_attack_pool(name):
                assert template.method.isupper()
                assert template.url.startswith("/")
                assert " " not in template.url
                assert 100 <= template.status <= 599

    def test_unknown_pool_rejected(self):
        with pytest.raises(ValueError):
            load_attack_pool("zero-days")


class TestCleanGenerator:
    def test_zero_length(self):
        assert list(generate_synthetic_clean(0, seed=1)) == []

    def test_exact_count(self):
        assert len(list(generate_synthetic_clean(137, seed=1))) == 137

    def test_seed_determinism(self):
        a = list(generate_synthetic_clean(200, seed=4))
        b = list(generate_synthetic_clean(200, seed=4))
        c = list(generate_synthetic_clean(200, seed=5))
        assert a == b
        assert a != c

    def test_every_line_parses(self):
        for line in generate_synthetic_clean(300, seed=2):
            record = parse_line(line)
            assert record.ip.startswith("198.18.")
            assert record.combined

    def test_timestamps_never_regress(self):
        stamps = [
            parse_timestamp(bracket_time(line))
            for line in generate_synthetic_clean(400, seed=3)
        ]
        assert all(a <= b for a, b in zip(stamps, stamps[1:]))

    def test_drift_dial(self):
        flat = TrafficProfile(extended_fraction=0.0)
        assert not any(
            "/v2/" in line for line in generate_synthetic_clean(400, 6, flat)
        )
        assert any("/v2/" in line for line in generate_synthetic_clean(400, 6))

    def test_locale_param_anchors_every_url(self):
        for line in generate_synthetic_clean(300, seed=8):
            assert "lang=en" in parse_line(line).raw_url


class TestInjection:
    def test_zero_sessions_pass_through(self):
        clean = list(generate_synthetic_clean(50, seed=11))
        pairs = list(inject(clean, small_plan(n_sessions=0)))
        assert pairs == [(line, NORMAL) for line in clean]

    def test_injection_is_deterministic(self):
        clean = list(generate_synthetic_clean(150, seed=11))
        assert list(inject(clean, small_plan())) == list(inject(clean, small_plan()))

    def test_clean_order_is_preserved(self):
        clean = list(generate_synthetic_clean(150, seed=11))
        pairs = list(inject(clean, small_plan()))
        assert [line for line, label in pairs if label == NORMAL] == clean

    def test_attack_sessions_get_private_addresses(self):
        clean = list(generate_synthetic_clean(150, seed=11))
        pairs = list(inject(clean, small_plan(n_sessions=4)))
        attack_ips = {
            line.split()[0] for line, label in pairs if label == INTRUSIVE
        }
        assert len(attack_ips) == 4
        assert all(ip.startswith("10.200.") for ip in attack_ips)
        assert sum(1 for _, label in pairs if label == INTRUSIVE) >= 4

    def test_injected_lines_parse_and_timestamps_hold(self):
        clean = list(generate_synthetic_clean(150, seed=11))
        pairs = list(inject(clean, small_plan(n_sessions=5)))
        stamps = [parse_timestamp(bracket_time(line)) for line, _ in pairs]
        assert all(a <= b for a, b in zip(stamps, stamps[1:]))
        for line, _ in pairs:
            parse_line(line)

    def test_streaming_matches_materialized(self):
        clean = list(generate_synthetic_clean(120, seed=12))
        streamed = list(inject(iter(clean), small_plan(), n_clean=len(clean)))
        materialized = list(inject(clean, small_plan()))
        assert streamed == materialized

    def test_required_empty_pool_rejected(self):
        with pytest.raises(EmptyPool):
            small_plan(novel_pool=(), novel_fraction=0.5)
        with pytest.raises(EmptyPool):
            small_plan(known_pool=(), novel_fraction=0.5)

    def test_unused_empty_pool_is_fine(self):
        small_plan(novel_pool=(), novel_fraction=0.0)
        small_plan(n_sessions=0, known_pool=(), novel_pool=())

    def test_overlapping_pools_rejected(self):
        shared = AttackTemplate("GET", "/cgi-bin/dup.cgi?x=1", 404)
        with pytest.raises(ValueError, match="overlap"):
            small_plan(known_pool=[shared], novel_pool=[shared])

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_sessions": -1},
            {"reqs_per_session": 0.0},
            {"novel_fraction": 1.5},
            {"novel_fraction": -0.1},
        ],
    )
    def test_bad_plan_parameters_rejected(self, kwargs):
        with pytest.raises(ValueError):
            small_plan(**kwargs)


class TestLabels:
    def test_labeled_records_attach_truth(self):
        lines, labels = generate_bootstrap(seed=9, n_normal=30, n_attack_sessions=1)
        records = list(labeled_records(zip(lines, labels)))
        assert [r.ground_truth for r in records] == labels

    def test_classify_partitions_the_four_cases(self):
        assert classify(INTRUSIVE, INTRUSIVE) == "tp"
        assert classify(NORMAL, INTRUSIVE) == "fn"
        assert classify(INTRUSIVE, NORMAL) == "fp"
        assert classify(NORMAL, NORMAL) == "tn"


class TestBatchMetrics:
    def test_low_noise_reference_counts(self):
        m = batch_metrics(0, fp=2091, fn=530, tp=2018, tn=997831)
        assert m.dr == pytest.approx(0.79, abs=0.005)
        assert m.fpr == pytest.approx(0.002, abs=0.005)
        assert m.f_measure == pytest.approx(0.61, abs=0.005)

    def test_high_noise_reference_counts(self):
        m = batch_metrics(0, fp=21838, fn=73, tp=2461, tn=978098)
        assert m.dr == pytest.approx(0.97, abs=0.005)
        assert m.fpr == pytest.approx(0.022, abs=0.005)
        assert m.f_measure == pytest.approx(0.18, abs=0.005)

    def test_perfect_batch(self):
        m = batch_metrics(0, fp=0, fn=0, tp=10, tn=90)
        assert (m.dr, m.fpr, m.precision, m.f_measure) == (1.0, 0.0, 1.0, 1.0)

    def test_degenerate_denominators_read_zero(self):
        benign_only = batch_metrics(0, fp=0, fn=0, tp=0, tn=5)
        assert benign_only.dr == 0.0
        assert benign_only.f_measure == 0.0
        all_missed = batch_metrics(0, fp=0, fn=5, tp=0, tn=5)
        assert all_missed.precision == 0.0

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            batch_metrics(0, 0, 0, 0, 0)

    def test_size_property(self):
        assert batch_metrics(0, 1, 2, 3, 4).size == 10


class TestQuartiles:
    def batch(self, index, fp, size=100):
        return batch_metrics(index, fp=fp, fn=0, tp=0, tn=size - fp)

    def test_single_batch_quarters(self):
        batches = [self.batch(i, fp) for i, fp in enumerate((4, 3, 2, 1))]
        assert fp_quartile_means(batches) == (4.0, 1.0)

    def test_two_batch_quarters(self):
        fps = (8, 6, 5, 5, 3, 2, 2, 1)
        batches = [self.batch(i, fp) for i, fp in enumerate(fps)]
        assert fp_quartile_means(batches) == (7.0, 1.5)

    def test_trailing_short_batch_is_excluded(self):
        batches = [self.batch(i, fp) for i, fp in enumerate((5, 4, 3, 2))]
        batches.append(self.batch(4, fp=39, size=40))
        assert fp_quartile_means(batches) == (5.0, 2.0)

    def test_no_batches(self):
        assert fp_quartile_means([]) == (0.0, 0.0)


class TestStreamFiles:
    def test_write_read_round_trip(self, tmp_path):
        lines, labels = generate_bootstrap(seed=9, n_normal=40, n_attack_sessions=2)
        corpus = tmp_path / "corpus.log"
        sidecar = tmp_path / "labels.txt"
        digest, total, intrusive = write_labeled_stream(
            zip(lines, labels), corpus, sidecar
        )
        assert total == len(lines)
        assert intrusive == labels.count(INTRUSIVE)
        assert digest == stream_digest(lines)
        assert list(read_labeled_stream(corpus, sidecar)) == list(zip(lines, labels))

    def test_metrics_csv_format(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, [batch_metrics(0, 1, 2, 3, 4)])
        rows = path.read_text().splitlines()
        assert rows[0] == "batch,fp,fn,tp,tn,dr,fpr,f_measure"
        assert rows[1] == "0,1,2,3,4,0.600000,0.100000,0.666667"


@pytest.fixture
def experiment_inputs(default_config, base_agents):
    lines, labels = generate_bootstrap(seed=31, n_normal=400, n_attack_sessions=4)
    records = list(labeled_records(zip(lines, labels)))
    return records, default_config, base_agents


class TestRunExperiment:
    def test_two_identical_runs_agree(self, experiment_inputs):
        records, config, base = experiment_inputs
        first = run_experiment(records, config, clone_agents(base), adapt=True,
                               batch_size=100)
        second = run_experiment(records, config, clone_agents(base), adapt=True,
                                batch_size=100)
        assert first.batches == second.batches
        assert first.totals == second.totals
        assert first.events == second.events

    def test_frozen_run_never_adapts(self, experiment_inputs):
        records, config, base = experiment_inputs
        agents = clone_agents(base)
        before = agents_digest(agents)
        result = run_experiment(records, config, agents, adapt=False,
                                batch_size=100)
        assert agents_digest(agents) == before
        assert result.adaptation.total == 0
        assert result.adaptation.accuracy is None
        assert all(event["adapted"] == [] for event in result.events)

    def test_adaptive_run_leaves_the_originals_alone(self, experiment_inputs):
        records, config, base = experiment_inputs
        before = agents_digest(base)
        clones = clone_agents(base)
        result = run_experiment(records, config, clones, adapt=True,
                                batch_size=100)
        assert agents_digest(base) == before
        if result.adaptation.total:
            assert agents_digest(clones) != before

    def test_totals_equal_batch_sums(self, experiment_inputs):
        records, config, base = experiment_inputs
        result = run_experiment(records, config, clone_agents(base), adapt=True,
                                batch_size=100)
        assert result.totals.fp == sum(b.fp for b in result.batches)
        assert result.totals.fn == sum(b.fn for b in result.batches)
        assert result.totals.tp == sum(b.tp for b in result.batches)
        assert result.totals.tn == sum(b.tn for b in result.batches)
        assert result.totals.batch_index == -1

    def test_batch_shapes(self, experiment_inputs):
        records, config, base = experiment_inputs
        result = run_experiment(records, config, clone_agents(base), adapt=True,
                                batch_size=100)
        kept = result.kept
        assert kept == result.totals.size
        assert len(result.batches) == math.ceil(kept / 100)
        for b in result.batches[:-1]:
            assert b.size == 100
        assert result.batches[-1].size == kept - 100 * (len(result.batches) - 1)
        assert [b.batch_index for b in result.batches] == list(range(len(result.batches)))

    def test_events_carry_truth_labels(self, experiment_inputs):
        records, config, base = experiment_inputs
        result = run_experiment(records, config, clone_agents(base), adapt=True,
                                batch_size=100)
        for event in result.events:
            assert event["truth"] in (NORMAL, INTRUSIVE)

    def test_unlabeled_records_rejected(self, experiment_inputs):
        records, config, base = experiment_inputs
        bare = [parse_line(records[0].to_line())]
        with pytest.raises(ValueError):
            run_experiment(bare, config, clone_agents(base), adapt=True)


SMALL_PROTOCOL = dict(
    seed=3,
    n_clean=6000,
    n_attack_sessions=8,
    bootstrap_normal=1200,
    bootstrap_attack_sessions=15,
)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("protocol")
    config = from_dict({"metrics": {"batch_size": 500}})
    summary = run_drift_experiment(out_dir=out, config=config, **SMALL_PROTOCOL)
    return out, summary


class TestDriftProtocol:
    def test_summary_shape(self, small_run):
        _, summary = small_run
        assert summary["seed"] == 3
        assert summary["records"] >= 6000
        assert summary["injected_records"] == summary["records"] - 6000
        assert set(summary["modes"]) == {"adaptive", "frozen"}
        for mode in summary["modes"].values():
            assert {
                "batches", "fp", "fn", "tp", "tn", "dr", "fpr", "f_measure",
                "fp_first_quartile_mean", "fp_last_quartile_mean",
                "adaptations", "adaptation_events", "adaptation_accuracy",
                "adaptations_per_agent", "records_per_second", "wall_seconds",
            } <= set(mode)
        assert set(summary["checks"]) == {
            "adaptive_fp_below_frozen", "adaptive_fp_declines",
            "adaptation_accuracy_ok", "frozen_models_unchanged",
        }

    def test_frozen_models_unchanged(self, small_run):
        _, summary = small_run
        assert summary["frozen_models_unchanged"] is True
        assert summary["modes"]["frozen"]["adaptations"] == 0

    def test_artifacts_written(self, small_run):
        out, summary = small_run
        for name in ("corpus.log", "corpus_labels.txt", "adaptive_metrics.csv",
                      "frozen_metrics.csv", "events.jsonl", "summary.json"):
            assert (out / name).exists(), name
        with open(out / "summary.json") as fh:
            assert json.load(fh) == summary
        lines = (out / "corpus.log").read_text(encoding="latin-1").splitlines()
        assert len(lines) == summary["records"]
        assert stream_digest(lines) == summary["stream_sha256"]

    def test_modes_score_the_same_stream(self, small_run):
        out, _ = small_run
        with open(out / "adaptive_metrics.csv") as fh:
            adaptive = list(csv.DictReader(fh))
        with open(out / "frozen_metrics.csv") as fh:
            frozen = list(csv.DictReader(fh))
        assert len(adaptive) == len(frozen) >= 2
        for a, f in zip(adaptive, frozen):
            size_a = sum(int(a[k]) for k in ("fp", "fn", "tp", "tn"))
            size_f = sum(int(f[k]) for k in ("fp", "fn", "tp", "tn"))
            assert size_a == size_f

    def test_events_jsonl_is_valid(self, small_run):
        out, summary = small_run
        with open(out / "events.jsonl") as fh:
            events = [json.loads(line) for line in fh]
        assert len(events) >= summary["modes"]["adaptive"]["adaptation_events"]
        for event in events:
            assert {"timestamp", "ordinal", "constraint", "mds",
                    "reference", "adapted", "truth"} == set(event)

    def test_rerun_is_byte_identical(self, small_run, tmp_path):
        out, summary = small_run
        config = from_dict({"metrics": {"batch_size": 500}})
        again = run_drift_experiment(out_dir=tmp_path, config=config,
                                     **SMALL_PROTOCOL)
        assert again["stream_sha256"] == summary["stream_sha256"]
        for name in ("adaptive_metrics.csv", "frozen_metrics.csv"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()
