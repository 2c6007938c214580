"""Config schema: defaults, strictness, violation batching, and round trips."""

import pytest

from celtibero import (
    ConfigError,
    config_from_dict,
    config_to_dict,
    malicious_count,
    parse_config,
)

MNIST_PATHS = {
    "train_images": "data/train-images-idx3-ubyte",
    "train_labels": "data/train-labels-idx1-ubyte",
    "test_images": "data/t10k-images-idx3-ubyte",
    "test_labels": "data/t10k-labels-idx1-ubyte",
}


def violations_of(raw):
    with pytest.raises(ConfigError) as excinfo:
        config_from_dict(raw)
    return excinfo.value.violations


class TestDefaults:
    def test_empty_config_materializes_documented_defaults(self):
        cfg = config_from_dict({})
        assert cfg.clients == 20
        assert cfg.malicious_fraction == 0.0
        assert cfg.rounds == 50
        assert cfg.local_epochs == 3
        assert cfg.participation == (0.6, 0.9)
        assert cfg.seed == 0
        assert cfg.output_dir is None
        assert cfg.dataset.kind == "synthetic"
        assert (cfg.dataset.classes, cfg.dataset.samples) == (4, 4000)
        assert (cfg.dataset.features, cfg.dataset.separation) == (20, 4.0)
        assert cfg.dataset.test_samples == 1000
        assert cfg.partition.kind == "iid"
        assert cfg.attack.kind == "none"
        assert cfg.aggregator.kind == "fedavg"
        assert cfg.architecture.hidden == (16,)
        assert cfg.architecture.activation == "relu"
        assert cfg.training.learning_rate == 0.05
        assert cfg.training.batch_size == 32

    def test_learning_rate_default_tracks_dataset_kind(self):
        assert config_from_dict({}).training.learning_rate == 0.05
        mnist = config_from_dict({"dataset": {"kind": "mnist_idx", **MNIST_PATHS}})
        assert mnist.training.learning_rate == 0.1


class TestUnknownKeysAreFatal:
    @pytest.mark.parametrize(
        "raw, where",
        [
            ({"sneaky": 1}, "top level"),
            ({"dataset": {"sneaky": 1}}, "dataset"),
            ({"partition": {"sneaky": 1}}, "partition"),
            ({"attack": {"kind": "ulfa", "sneaky": 1}}, "attack"),
            (
                {
                    "attack": {
                        "kind": "mra",
                        "trigger": {"positions": [0], "values": [1.0], "sneaky": 1},
                    },
                    "malicious_fraction": 0.2,
                },
                "attack.trigger",
            ),
            ({"aggregator": {"kind": "krum", "sneaky": 1}}, "aggregator"),
            ({"architecture": {"sneaky": 1}}, "architecture"),
            ({"training": {"sneaky": 1}}, "training"),
        ],
    )
    def test_unknown_key_reported_with_location(self, raw, where):
        assert any(
            v.startswith(where) and "unknown key 'sneaky'" in v for v in violations_of(raw)
        )


class TestViolationBatching:
    def test_all_violations_reported_in_one_error(self):
        violations = violations_of(
            {"clients": 1, "rounds": -2, "local_epochs": 0, "seed": -1}
        )
        assert len(violations) == 4
        joined = "\n".join(violations)
        for key in ("clients", "rounds", "local_epochs", "seed"):
            assert key in joined

    def test_honest_majority_message(self):
        violations = violations_of({"malicious_fraction": 0.5})
        assert violations == [
            "malicious_fraction: must lie in [0, 0.5) so honest clients hold a "
            "strict majority, got 0.5"
        ]


class TestValueViolations:
    @pytest.mark.parametrize(
        "raw, fragment",
        [
            ({"dataset": {"kind": "imagenet"}}, "dataset.kind"),
            ({"dataset": {"classes": 1}}, "dataset.classes"),
            ({"dataset": {"classes": 8, "features": 4}}, "features (4) must be >= classes (8)"),
            ({"dataset": {"separation": 0}}, "dataset.separation"),
            ({"dataset": {"kind": "mnist_idx"}}, "dataset.train_images: required"),
            ({"partition": {"kind": "dirichlet", "alpha": 0}}, "partition.alpha"),
            ({"clients": "many"}, "clients: expected an integer"),
            ({"participation": [0.5]}, "participation"),
            ({"participation": [0.9, 0.5]}, "participation"),
            ({"participation": [0.0, 0.5]}, "participation"),
            ({"attack": {"kind": "ddos"}}, "attack.kind"),
            ({"attack": {"kind": "ulfa", "flip_fraction": 2}}, "attack.flip_fraction"),
            (
                {"attack": {"kind": "tlfa", "source_class": 2, "target_class": 2}},
                "source and target classes must differ",
            ),
            ({"attack": {"kind": "tlfa", "source_class": 9}}, "attack.source_class"),
            ({"attack": {"kind": "mra", "target_class": 9}}, "attack.target_class"),
            ({"attack": {"kind": "mra", "poison_fraction": 0}}, "attack.poison_fraction"),
            ({"attack": {"kind": "mra", "boost_factor": -1}}, "attack.boost_factor"),
            (
                {"attack": {"kind": "neurotoxin", "mask_ratio": 1}},
                "attack.mask_ratio",
            ),
            ({"attack": {"kind": "dba"}}, "dba needs at least one malicious client"),
            ({"aggregator": {"kind": "mean"}}, "aggregator.kind"),
            ({"aggregator": {"kind": "krum", "krum_f": -1}}, "aggregator.krum_f"),
            (
                {"aggregator": {"kind": "celtibero", "linkage": "ward"}},
                "aggregator.linkage",
            ),
            ({"architecture": {"hidden": []}}, "architecture.hidden"),
            ({"architecture": {"hidden": [16, 0]}}, "architecture.hidden"),
            ({"architecture": {"activation": "gelu"}}, "architecture.activation"),
            ({"training": {"learning_rate": 0}}, "training.learning_rate"),
            ({"training": {"batch_size": 0}}, "training.batch_size"),
        ],
    )
    def test_violation_mentions_offending_key(self, raw, fragment):
        assert any(fragment in v for v in violations_of(raw))

    @pytest.mark.parametrize(
        "trigger, fragment",
        [
            ({"positions": [0, 25], "values": [1.0]}, "1 values"),
            ({"positions": [0, 99], "values": [1.0, 1.0]}, "lie in [0, 20)"),
            ({"positions": [0, 0], "values": [1.0, 1.0]}, "distinct"),
            ({"positions": [0, 1], "values": [1.0, 2.0]}, "values must lie in [0, 1]"),
            ({"positions": "corner", "values": [1.0]}, "list of integers"),
            ({"positions": [0], "values": "bright"}, "list of numbers"),
        ],
    )
    def test_trigger_violations(self, trigger, fragment):
        raw = {"attack": {"kind": "mra", "trigger": trigger}, "malicious_fraction": 0.2}
        assert any(fragment in v for v in violations_of(raw))


class TestTriggerMaterialization:
    def test_synthetic_default_trigger(self):
        cfg = config_from_dict({"attack": {"kind": "mra"}, "malicious_fraction": 0.2})
        assert cfg.attack.trigger.positions == (0, 1, 2)
        assert cfg.attack.trigger.values == (1.0, 1.0, 1.0)
        assert cfg.attack.trigger.target_class == 0

    def test_mnist_default_trigger_is_corner_patch(self):
        cfg = config_from_dict(
            {
                "dataset": {"kind": "mnist_idx", **MNIST_PATHS},
                "attack": {"kind": "mra"},
                "malicious_fraction": 0.2,
            }
        )
        expected = tuple(r * 28 + c for r in range(3) for c in range(3))
        assert cfg.attack.trigger.positions == expected

    def test_explicit_trigger_parsed(self):
        cfg = config_from_dict(
            {
                "attack": {
                    "kind": "mra",
                    "target_class": 2,
                    "trigger": {"positions": [16, 17, 18], "values": [1, 1, 0.5]},
                },
                "malicious_fraction": 0.2,
            }
        )
        assert cfg.attack.trigger.positions == (16, 17, 18)
        assert cfg.attack.trigger.values == (1.0, 1.0, 0.5)
        assert cfg.attack.trigger.target_class == 2

    def test_dba_fragment_default_follows_attacker_count(self):
        wide = {"positions": [0, 1, 2, 3, 4, 5], "values": [1.0] * 6}
        cfg = config_from_dict(
            {
                "attack": {"kind": "dba", "trigger": wide},
                "malicious_fraction": 0.4,
                "clients": 20,
            }
        )
        assert cfg.attack.dba_fragments == 4
        few = config_from_dict(
            {
                "attack": {"kind": "dba", "trigger": wide},
                "malicious_fraction": 0.26,
                "clients": 8,
            }
        )
        assert few.attack.dba_fragments == 2

    def test_dba_derived_fragments_clamp_to_trigger_size(self):
        cfg = config_from_dict({"attack": {"kind": "dba"}, "malicious_fraction": 0.4})
        assert len(cfg.attack.trigger.positions) == 3
        assert cfg.attack.dba_fragments == 3

    def test_dba_explicit_fragment_overflow_is_an_error(self):
        raw = {
            "attack": {"kind": "dba", "dba_fragments": 5},
            "malicious_fraction": 0.4,
        }
        assert any("5 fragments exceed 3" in v for v in violations_of(raw))


class TestCanonicalization:
    def test_irrelevant_keys_reset_to_defaults(self):
        cfg = config_from_dict({"aggregator": {"kind": "fedavg", "krum_f": 7}})
        assert cfg.aggregator.krum_f == 1
        cfg = config_from_dict({"partition": {"kind": "iid", "alpha": 9.9}})
        assert cfg.partition.alpha == 0.5
        cfg = config_from_dict({"attack": {"kind": "none", "flip_fraction": 0.5}})
        assert cfg.attack.flip_fraction == 1.0
        cfg = config_from_dict(
            {"aggregator": {"kind": "celtibero", "krum_f": 7, "linkage": "single"}}
        )
        assert cfg.aggregator.krum_f == 1
        assert cfg.aggregator.linkage == "single"


class TestRoundTrip:
    @pytest.mark.parametrize(
        "raw",
        [
            {},
            {"attack": {"kind": "ulfa", "flip_fraction": 0.8}, "malicious_fraction": 0.3},
            {
                "attack": {"kind": "tlfa", "source_class": 2, "target_class": 1},
                "malicious_fraction": 0.3,
            },
            {
                "attack": {
                    "kind": "mra",
                    "boost_factor": 3.0,
                    "poison_fraction": 1.0,
                    "trigger": {"positions": [16, 17, 18], "values": [1, 1, 1]},
                },
                "malicious_fraction": 0.4,
            },
            {"attack": {"kind": "dba"}, "malicious_fraction": 0.4},
            {
                "attack": {"kind": "neurotoxin", "mask_ratio": 0.5, "poison_fraction": 1.0},
                "malicious_fraction": 0.4,
            },
            {"aggregator": {"kind": "celtibero", "linkage": "single"}},
            {"aggregator": {"kind": "median_krum", "krum_f": 4}},
            {"partition": {"kind": "dirichlet", "alpha": 0.5}},
            {
                "dataset": {"kind": "mnist_idx", **MNIST_PATHS, "train_subset": 2000},
                "output_dir": "results/run1",
                "seed": 11,
            },
        ],
    )
    def test_config_dict_round_trip_is_exact(self, raw):
        cfg = config_from_dict(raw)
        assert config_from_dict(config_to_dict(cfg)) == cfg


class TestMaliciousCount:
    def test_floor_semantics(self):
        cfg = config_from_dict({"malicious_fraction": 0.4, "clients": 20})
        assert malicious_count(cfg) == 8
        cfg = config_from_dict({"malicious_fraction": 0.49, "clients": 10})
        assert malicious_count(cfg) == 4

    def test_exact_products_not_lost_to_float_representation(self):
        cfg = config_from_dict({"malicious_fraction": 0.3, "clients": 10})
        assert malicious_count(cfg) == 3


class TestParseConfig:
    def test_valid_yaml_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("clients: 8\nrounds: 3\naggregator:\n  kind: celtibero\n")
        cfg = parse_config(path)
        assert cfg.clients == 8
        assert cfg.rounds == 3
        assert cfg.aggregator.kind == "celtibero"

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert parse_config(path) == config_from_dict({})

    def test_syntax_error_reports_line(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("clients: 5\nrounds: [1, 2\n")
        with pytest.raises(ConfigError) as excinfo:
            parse_config(path)
        assert excinfo.value.violations[0].startswith("syntax error at line")

    def test_non_mapping_document_rejected(self, tmp_path):
        path = tmp_path / "scalar.yaml"
        path.write_text("just a string\n")
        with pytest.raises(ConfigError, match="expected a mapping"):
            parse_config(path)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            parse_config(tmp_path / "nope.yaml")