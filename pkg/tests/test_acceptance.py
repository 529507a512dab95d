"""Acceptance suite: one test per criterion, each printing PASS or FAIL.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion
lines. The end-to-end translation criterion trains three seeded models
(about 8 minutes each on 2 CPU cores), so the whole module takes roughly
half an hour; everything else finishes in a few minutes.
"""

import math
import warnings
from contextlib import contextmanager

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from torch import nn

from eventsb.bridge import BridgeConfig, entropic_cost, interpolate, sample_chain, sinkhorn_plan
from eventsb.errors import ConfigError
from eventsb.events import SceneConfig, bin_events, generate_night_scene, polarity_imbalance
from eventsb.io import read_histogram, read_stream, write_histogram, write_stream
from eventsb.losses import (
    ContrastiveConfig,
    adv_loss_critic,
    adv_loss_gen,
    permuted_channel_index,
    sb_loss,
    shuffle_permutations,
    spatial_contrastive_loss,
    temporal_contrastive_loss,
)
from eventsb.metrics import event_fid, frechet_distance, train_extractor
from eventsb.networks import (
    Generator,
    GeneratorConfig,
    PatchCritic,
    ProjectionHeads,
    SpatialFrequencyBottleneck,
)
from eventsb.training import (
    TrainConfig,
    models_from_checkpoint,
    normalize_counts,
    train,
    translate,
)
from eventsb.wavelet import WaveletSubbands, dwt2, idwt2
from helpers import finite_difference_check, histogram_set

warnings.filterwarnings("ignore", message="only .* samples")

# the small-set covariance warning is intended behavior; these tests use
# desk-sized sets on purpose
pytestmark = pytest.mark.filterwarnings("ignore:only .* samples")


@contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {number:02d} {name}: FAIL", flush=True)
        raise
    print(f"\nACCEPTANCE {number:02d} {name}: PASS", flush=True)


# ---------------------------------------------------------------- criterion 1


def test_criterion_1_wavelet_round_trip():
    with criterion(1, "wavelet round trip + Parseval"):
        rng = torch.Generator().manual_seed(0)
        for trial in range(100):
            c = int(torch.randint(1, 4, (1,), generator=rng))
            h = 2 * int(torch.randint(2, 33, (1,), generator=rng))
            w = 2 * int(torch.randint(2, 33, (1,), generator=rng))
            x = torch.randn(c, h, w, generator=rng)
            bands = dwt2(x)
            assert (idwt2(bands) - x).abs().max() <= 1e-5
            energy_in = float((x.double() ** 2).sum())
            energy_sub = float(sum((b.double() ** 2).sum() for b in bands))
            assert abs(energy_in - energy_sub) <= 1e-6 * energy_in


# ---------------------------------------------------------------- criterion 2


def test_criterion_2_disentanglement():
    with criterion(2, "bin disentanglement at every scale"):
        for bins in (3, 8):
            cfg = GeneratorConfig(bins=bins)  # paper-rule channel widths
            torch.manual_seed(bins)
            gen = Generator(cfg, steps=5)
            group = cfg.base_channels // bins
            t_emb = gen.time_embedding(2, 1, torch.zeros(1))
            for stage in gen.encoder.stages:
                f = torch.randn(1, cfg.base_channels, 8, 8)
                base = stage(f, t_emb)
                for b in range(bins):
                    bumped = f.clone()
                    bumped[:, b * group : (b + 1) * group] += 0.5
                    out = stage(bumped, t_emb)
                    for other in range(bins):
                        sl = slice(other * group, (other + 1) * group)
                        if other != b:
                            assert torch.equal(base[:, sl], out[:, sl])


# ---------------------------------------------------------------- criterion 3


def test_criterion_3_gradient_checks():
    with criterion(3, "finite-difference gradient checks"):
        gen = torch.Generator().manual_seed(0)

        block = SpatialFrequencyBottleneck(4, 16).double()
        t_emb = torch.randn(1, 16, generator=gen, dtype=torch.float64)
        weight = torch.randn(1, 4, 8, 8, generator=gen, dtype=torch.float64)
        x = torch.randn(1, 4, 8, 8, generator=gen, dtype=torch.float64)
        finite_difference_check(lambda v: (block(v, t_emb) * weight).sum(), x)

        heads = ProjectionHeads([6], embed_dim=8).double()
        day = torch.randn(1, 6, 8, 8, generator=gen, dtype=torch.float64)
        ccfg = ContrastiveConfig(temperature=0.11, negatives=3, locations=8)
        finite_difference_check(
            lambda v: spatial_contrastive_loss([day], [v], heads, ccfg, np.random.default_rng(7)),
            day * 0.5 + 0.1,
        )
        finite_difference_check(
            lambda v: temporal_contrastive_loss(
                [v], [day], heads, 3, ccfg, np.random.default_rng(7)
            ).value,
            day * 0.5 + 0.1,
        )

        bcfg = BridgeConfig(steps=5, tau=0.3)
        x_t = torch.randn(1, 2, 8, 8, generator=gen, dtype=torch.float64)
        z = torch.randn(1, 8, generator=gen, dtype=torch.float64)
        z_hat = torch.randn(1, 8, generator=gen, dtype=torch.float64)
        finite_difference_check(lambda v: sb_loss(x_t, v, z, z_hat, 0.4, bcfg), x_t * 0.7)
        finite_difference_check(
            lambda v: sb_loss(x_t, x_t * 0.7, z, v.reshape(1, 8), 0.4, bcfg), z_hat
        )

        torch.manual_seed(1)
        critic = PatchCritic(2, base_channels=8, stages=3).double()
        xc = torch.randn(1, 2, 8, 8, generator=gen, dtype=torch.float64)
        finite_difference_check(lambda v: adv_loss_gen(critic(v, 1)), xc)
        real_scores = critic(xc, 1).detach()
        finite_difference_check(lambda v: adv_loss_critic(real_scores, critic(v, 1)), xc + 0.2)


# ---------------------------------------------------------------- criterion 4


def test_criterion_4_bridge_endpoints_and_moments():
    with criterion(4, "bridge endpoint exactness + Gaussian moments"):
        cfg = BridgeConfig(steps=5, tau=1.0)
        rng = torch.Generator().manual_seed(0)
        x0 = torch.randn(2, 4, 4, generator=rng)
        x1 = torch.randn(2, 4, 4, generator=rng)
        assert torch.equal(interpolate(x0, x1, 0.3, 0.3, cfg, rng), x0)
        assert torch.equal(interpolate(x0, x1, 0.3, 1.0, cfg, rng), x1)

        n = 10_000
        draws = torch.stack([interpolate(x0, x1, 0.0, 0.5, cfg, rng) for _ in range(n)])
        variance = 0.25
        mean_tol = 3.0 * math.sqrt(variance / n)
        assert (draws.mean(0) - 0.5 * (x0 + x1)).abs().max() <= mean_tol * 1.6
        var_tol = 3.0 * math.sqrt(2.0 * variance**2 / (n - 1))
        assert (draws.var(0) - variance).abs().max() <= var_tol * 1.6


# ---------------------------------------------------------------- criterion 5


def _random_feasible_plans(a, b, count, rng, iters=150):
    plans = rng.random((count, a.size, b.size)) + 0.05
    for _ in range(iters):
        plans *= (a / plans.sum(axis=2))[:, :, None]
        plans *= (b / plans.sum(axis=1))[:, None, :]
    return plans


def test_criterion_5_sinkhorn_oracle():
    with criterion(5, "sinkhorn marginals + optimality vs random plans"):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            a = rng.random(5)
            a /= a.sum()
            b = rng.random(5)
            b /= b.sum()
            cost = rng.random((5, 5))
            epsilon = 0.1
            plan = sinkhorn_plan(a, b, cost, epsilon, tol=1e-9)
            assert np.abs(plan.sum(axis=1) - a).max() <= 1e-6
            assert np.abs(plan.sum(axis=0) - b).max() <= 1e-6
            objective = entropic_cost(plan, cost, epsilon)
            rivals = _random_feasible_plans(a, b, 1000, rng)
            logs = np.where(rivals > 0, np.log(rivals), 0.0)
            rival_objectives = (rivals * cost).sum(axis=(1, 2)) + epsilon * (
                rivals * logs
            ).sum(axis=(1, 2))
            assert objective <= rival_objectives.min() + 1e-8


# ---------------------------------------------------------------- criterion 6


def test_criterion_6_permutation_contract():
    with criterion(6, "shuffling permutation contract"):
        full = sorted(
            p for p in __import__("itertools").permutations(range(3)) if p != (0, 1, 2)
        )
        for seed in range(20):
            perms = shuffle_permutations(3, 5, np.random.default_rng(seed))
            assert sorted(perms) == full
        for seed in range(100):
            perms = shuffle_permutations(8, 20, np.random.default_rng(seed))
            assert len(perms) == 20
            assert len(set(perms)) == 20
            assert tuple(range(8)) not in perms
        with pytest.raises(ConfigError):
            shuffle_permutations(1, 1, np.random.default_rng(0))


# ---------------------------------------------------------------- criterion 7


class _LookupHeads(nn.Module):
    """Maps each distinct feature tensor to its own basis vector.

    The first-seen tensor (the ordered reference, re-used as the aligned
    positive) lands on e0; every later distinct tensor (the permuted
    negatives) gets the next basis vector, so all negatives are exactly
    orthogonal to the reference.
    """

    def __init__(self, dim=64):
        super().__init__()
        self.dim = dim
        self.seen = {}

    def project(self, level, feats, locations):
        key = feats.detach().numpy().tobytes()
        if key not in self.seen:
            self.seen[key] = len(self.seen)
        vec = torch.zeros(self.dim, dtype=feats.dtype)
        vec[self.seen[key]] = 1.0
        return vec.expand(feats.shape[0], len(locations), self.dim)


def test_criterion_7_temporal_loss_closed_forms():
    with criterion(7, "temporal contrastive closed forms"):
        tau = 0.11
        for r, bins in ((1, 2), (5, 3), (20, 8)):
            group = 2
            feats = torch.arange(1, bins + 1, dtype=torch.float64)
            feats = feats.repeat_interleave(group)[None, :, None, None].expand(1, bins * group, 4, 4)
            cfg = ContrastiveConfig(temperature=tau, negatives=r, locations=4)
            result = temporal_contrastive_loss(
                [feats.clone()],
                [feats.clone()],
                _LookupHeads(),
                bins,
                cfg,
                np.random.default_rng(0),
            )
            expected = -math.log(math.exp(1 / tau) / (math.exp(1 / tau) + r))
            assert not result.skipped
            assert abs(float(result.value) - expected) <= 1e-6, (r, float(result.value), expected)


# -------------------------------------------------- shared synthetic corpus


@pytest.fixture(scope="module")
def corpus():
    return {
        "day_train": histogram_set(120, "day", start_seed=0),
        "night_train": histogram_set(120, "night", start_seed=5000),
        "day_test": histogram_set(40, "day", start_seed=2000),
        "night_ref": histogram_set(40, "night", start_seed=7000),
    }


@pytest.fixture(scope="module")
def certified_extractor(corpus):
    return train_extractor(corpus["day_train"], corpus["night_train"], arch="fid", seed=0)


# ---------------------------------------------------------------- criterion 8


def test_criterion_8_metric_sanity(corpus, certified_extractor):
    with criterion(8, "metric closed forms + extractor quality"):
        assert frechet_distance([0.0], [[1.0]], [0.0], [[1.0]]) == pytest.approx(0.0, abs=1e-6)
        assert frechet_distance([0.0], [[1.0]], [1.0], [[1.0]]) == pytest.approx(1.0, abs=1e-6)
        assert frechet_distance([0.0], [[4.0]], [0.0], [[1.0]]) == pytest.approx(1.0, abs=1e-6)

        extractor, fingerprint = certified_extractor
        assert fingerprint.validation_accuracy >= 0.95

        day = corpus["day_train"]
        cross = event_fid(extractor, corpus["day_test"], corpus["night_ref"])
        within = event_fid(extractor, day[:40], day[40:80])
        assert cross >= 5.0 * within


# ---------------------------------------------------------------- criterion 9


TRAIN_SEEDS = (0, 1, 2)


def _desk_train_config(seed):
    return TrainConfig(
        bins=3,
        size=32,
        iterations=2000,
        seed=seed,
        base_channels=18,
        critic_channels=24,
        checkpoint_every=10000,
    )


@pytest.fixture(scope="module")
def trained_runs(corpus, tmp_path_factory):
    runs = {}
    for seed in TRAIN_SEEDS:
        out = tmp_path_factory.mktemp(f"accept9_seed{seed}")
        result = train(
            _desk_train_config(seed), corpus["day_train"], corpus["night_train"], out
        )
        translated = translate(result.checkpoint, corpus["day_test"], seed=0)
        runs[seed] = {"result": result, "translated": translated}
    return runs


def _ordered_vs_shuffled_tc(checkpoint, day_test, translated):
    generator, _, heads = models_from_checkpoint(checkpoint)
    cfg = TrainConfig.from_dict(checkpoint["train_config"])
    t_idx = cfg.bridge.steps - 1
    swap = permuted_channel_index((1, 2, 0), 2)  # bin-major input channels
    ordered, shuffled = [], []
    with torch.no_grad():
        for d, t in zip(day_test, translated):
            xd = torch.from_numpy(normalize_counts(d.data, cfg.norm_cap))[None]
            xt = torch.from_numpy(normalize_counts(t.data, cfg.norm_cap))[None]
            day_feats = generator.encode_features(xd, t_idx)
            gen_feats = generator.encode_features(xt, t_idx)
            o = temporal_contrastive_loss(
                gen_feats, day_feats, heads, cfg.bins, cfg.contrastive, np.random.default_rng(0)
            )
            shuffled_feats = generator.encode_features(xt[:, swap], t_idx)
            s = temporal_contrastive_loss(
                shuffled_feats, day_feats, heads, cfg.bins, cfg.contrastive, np.random.default_rng(0)
            )
            ordered.append(float(o.value))
            shuffled.append(float(s.value))
    return float(np.mean(ordered)), float(np.mean(shuffled))


def test_criterion_9_translation_trend(corpus, certified_extractor, trained_runs):
    with criterion(9, "end-to-end translation trend, 3 seeds"):
        extractor, _ = certified_extractor
        day_test, night_ref = corpus["day_test"], corpus["night_ref"]
        fid_day = event_fid(extractor, day_test, night_ref)
        imb_day = float(np.mean([polarity_imbalance(h) for h in day_test]))
        imb_night = float(np.mean([polarity_imbalance(h) for h in night_ref]))

        fid_pass = imbalance_pass = order_pass = 0
        for seed, run in trained_runs.items():
            translated = run["translated"]
            fid_tr = event_fid(extractor, translated, night_ref)
            if fid_tr <= 0.7 * fid_day:
                fid_pass += 1

            imb_tr = float(np.mean([polarity_imbalance(h) for h in translated]))
            between = imb_day < imb_tr < imb_night
            closer = abs(imb_tr - imb_night) < abs(imb_tr - imb_day)
            if between and closer:
                imbalance_pass += 1

            tc_ordered, tc_shuffled = _ordered_vs_shuffled_tc(
                run["result"].checkpoint, day_test, translated
            )
            if tc_ordered < tc_shuffled:
                order_pass += 1
            print(
                f"\n  seed {seed}: fid {fid_day:.2f}->{fid_tr:.2f}, "
                f"imbalance day {imb_day:.3f} tr {imb_tr:.3f} night {imb_night:.3f}, "
                f"tc {tc_ordered:.4f} vs shuffled {tc_shuffled:.4f}",
                flush=True,
            )

        assert fid_pass >= 2, f"fid improvement >=30% on {fid_pass}/3 seeds"
        assert imbalance_pass >= 2, f"imbalance placement on {imbalance_pass}/3 seeds"
        assert order_pass >= 2, f"temporal order score on {order_pass}/3 seeds"


def test_monotone_bridging_statistic(corpus, trained_runs):
    # chain states move toward the night domain as the step index grows:
    # mean squared distance to the night-domain mean histogram is
    # non-increasing in i, allowing one inversion over i = 0..4.
    run = trained_runs[TRAIN_SEEDS[0]]
    ckpt = run["result"].checkpoint
    generator, _, _ = models_from_checkpoint(ckpt)
    cfg = TrainConfig.from_dict(ckpt["train_config"])
    night_mean = np.mean(
        [normalize_counts(h.data, cfg.norm_cap) for h in corpus["night_ref"]], axis=0
    )
    gen_fn = lambda x, t, z: generator(x, t, z)[0]  # noqa: E731
    distances = []
    for i in range(cfg.bridge.steps):
        total = 0.0
        for h in corpus["day_test"][:10]:
            x = torch.from_numpy(normalize_counts(h.data, cfg.norm_cap))[None]
            state = sample_chain(
                gen_fn, x, i, cfg.bridge, torch.Generator().manual_seed(0),
                latent_dim=generator.cfg.latent_dim,
            )
            total += float(((state.x[0].numpy() - night_mean) ** 2).mean())
        distances.append(total / 10.0)
    inversions = sum(1 for a, b in zip(distances, distances[1:]) if b > a + 1e-12)
    assert inversions <= 1, f"distances {distances}"


# --------------------------------------------------------------- criterion 10


def test_criterion_10_determinism_and_formats(tmp_path, corpus):
    with criterion(10, "determinism + binary formats + checkpoint round trip"):
        # synthetic generation and binary outputs are byte-stable
        scene = SceneConfig(seed=42)
        for sub in ("a", "b"):
            d = tmp_path / sub
            d.mkdir()
            stream = generate_night_scene(scene)
            hist = bin_events(stream, 3)
            write_stream(d / "s.evs", stream)
            write_histogram(d / "h.evh", hist)
        assert (tmp_path / "a" / "s.evs").read_bytes() == (tmp_path / "b" / "s.evs").read_bytes()
        assert (tmp_path / "a" / "h.evh").read_bytes() == (tmp_path / "b" / "h.evh").read_bytes()
        assert read_stream(tmp_path / "a" / "s.evs") == stream
        assert read_histogram(tmp_path / "a" / "h.evh") == hist

        # identical config + seed -> bitwise identical loss CSVs
        cfg = TrainConfig(
            bins=3, size=32, iterations=12, seed=3, base_channels=12, critic_channels=16
        )
        day = corpus["day_train"][:6]
        night = corpus["night_train"][:6]
        run_a = train(cfg, day, night, tmp_path / "run_a")
        run_b = train(cfg, day, night, tmp_path / "run_b")
        assert run_a.loss_csv_path.read_bytes() == run_b.loss_csv_path.read_bytes()

        # checkpoint save/load reproduces translation outputs exactly
        from_memory = translate(run_a.checkpoint, day[:2], seed=1)
        from_disk = translate(run_a.checkpoint_path, day[:2], seed=1)
        for x, y in zip(from_memory, from_disk):
            assert np.array_equal(x.data, y.data)
