import json
from types import SimpleNamespace

import numpy as np
import pytest

from critrelay.dataset import (CLIP, Dataset, FeatureRow, build_dataset, expand_suite,
                               extract_features, feature_names, load_suite, read_dataset,
                               sample_steps, schema_hash, write_dataset)
from critrelay.dynsim import FAR_IMPEDANCE, ContingencySpec, SimConfig, run_simulation
from critrelay.gridcase import CaseError
from critrelay.relaysim import RelayPlacementPolicy, instantiate_relays

LINE_POLICY = RelayPlacementPolicy(per_line_min_kv=230.0, monitor_kv_window=(100.0, 200.0))

SMALL_SUITE = """
seed = 3
t_fault = 0.5
[bus_faults]
targets = ["7"]
nk_removals = [1]
[line_faults]
targets = ["L5-7", "L8-9"]
locations = [0.5]
nk_removals = [1]
[machine_outages]
targets = ["G3"]
[[operating_variants]]
load_scale = 0.0
[[operating_variants]]
load_scale = 0.1
compensate_with = ["G2", "G3"]
[[topology_variants]]
pre_outages = []
"""


def fake_traj(relay_id, z_values, dt=1 / 240, t0=0.0):
    z = np.asarray(z_values, dtype=complex)
    times = t0 + dt * np.arange(len(z))
    return SimpleNamespace(times=times, relay_series=lambda rid: z)


# ---------------------------------------------------------------- expansion

def test_single_target_gives_single_contingency(wscc9):
    cs = expand_suite(wscc9, load_suite('[bus_faults]\ntargets = ["5"]\n'))
    assert len(cs) == 1 and cs[0].kind == "bus_fault" and cs[0].target == "5"


def test_line_targets_times_variants_times_topologies(ieee39):
    targets = [b.id for b in ieee39.branches if b.id.startswith("L")][:10]
    text = f"""
[line_faults]
targets = {json.dumps(targets)}
nk_removals = [1]
[[operating_variants]]
load_scale = 0.0
[[operating_variants]]
load_scale = 0.05
[[topology_variants]]
pre_outages = []
[[topology_variants]]
pre_outages = ["L25-26"]
"""
    assert "L25-26" not in targets
    cs = expand_suite(ieee39, load_suite(text))
    assert len(cs) == 40
    assert len({c.id for c in cs}) == 40


def test_expansion_is_deterministic(wscc9):
    spec = load_suite(SMALL_SUITE)
    a = expand_suite(wscc9, spec)
    b = expand_suite(wscc9, load_suite(SMALL_SUITE))
    assert a == b
    # (1 bus + 2 lines + 1 machine) x 2 variants
    assert len(a) == 8
    assert spec.digest() == load_suite(SMALL_SUITE).digest()


def test_removal_sets_shared_across_variants(ieee39):
    text = """
seed = 5
[bus_faults]
targets = ["16", "4"]
nk_removals = [1]
[[line_faults]]
targets = ["L3-4", "L21-22"]
locations = []
random_locations = 1
nk_removals = [2]
[[operating_variants]]
load_scale = 0.0
[[operating_variants]]
load_scale = 0.1
"""
    cs = expand_suite(ieee39, load_suite(text))
    by_stem = {}
    for c in cs:
        stem = c.id.rsplit("-", 1)[0]
        by_stem.setdefault(stem, set()).add(c.post_clear_removals)
    assert all(len(v) == 1 for v in by_stem.values())
    for c in cs:
        if c.kind == "line_fault":
            assert len(c.post_clear_removals) == 2 and c.target in c.post_clear_removals


@pytest.mark.parametrize("text", [
    '[bus_faults]\ntargets = ["99"]\n',
    '[line_faults]\ntargets = ["L1-99"]\n',
    '[machine_outages]\ntargets = ["G77"]\n',
    '[[topology_variants]]\npre_outages = ["nope"]\n',
    '[bus_faults]\ntargets = "some"\n',
])
def test_invalid_targets_rejected(wscc9, text):
    with pytest.raises(CaseError):
        expand_suite(wscc9, load_suite(text))


def test_bad_suite_files_rejected():
    for text in ("colour = 1\n", "[bus_faults]\nwhich = 1\n", "[[line_faults]]\nlocation = 0.5\n",
                 "seed = ["):
        with pytest.raises(CaseError):
            load_suite(text)


# ---------------------------------------------------------------- features

def test_feature_layout():
    assert sample_steps(1 / 240, 60.0) == [-1, 0, 1, 2, 3, 4]
    assert feature_names() == [f"f{i}" for i in range(12)]
    assert schema_hash(1 / 240, 60.0) == schema_hash(1 / 240, 60.0)
    assert schema_hash(1 / 240, 60.0) != schema_hash(1 / 120, 60.0)


def test_constant_line_impedance_features(ieee39):
    relay = instantiate_relays(ieee39)[0]
    z = relay.line_z
    f = extract_features(fake_traj(relay.id, [z] * 20), relay, t_fault=10 / 240, frequency=60.0)
    assert len(f) == 12
    assert np.allclose(f[:6], z.real / abs(z), rtol=0, atol=1e-15)
    assert np.allclose(f[6:], z.imag / abs(z), rtol=0, atol=1e-15)


def test_sentinel_maps_to_plus_clip(ieee39):
    relay = instantiate_relays(ieee39)[0]
    f = extract_features(fake_traj(relay.id, [FAR_IMPEDANCE] * 20), relay, 10 / 240, 60.0)
    assert (f == CLIP).all()


def test_large_values_clipped(ieee39):
    relay = instantiate_relays(ieee39)[0]
    big = -1e4 * abs(relay.line_z) * (1 + 1j)
    f = extract_features(fake_traj(relay.id, [big] * 20), relay, 10 / 240, 60.0)
    assert (f == -CLIP).all()


def test_window_not_covered(ieee39):
    relay = instantiate_relays(ieee39)[0]
    with pytest.raises(ValueError):
        extract_features(fake_traj(relay.id, [1 + 1j] * 5), relay, 2 / 240, 60.0)
    with pytest.raises(ValueError):
        extract_features(fake_traj(relay.id, [1 + 1j] * 20), relay, 0.0, 60.0)


def test_bolted_fault_at_relay_bus_features(ieee39):
    relays = instantiate_relays(ieee39)
    relay = next(r for r in relays if r.id == "L16-17@from")
    cfg = SimConfig.for_case(ieee39, t_end=1.05, fault_admittance=-1e9j)
    c = ContingencySpec("bus_fault", "16", t_fault=1.0, clearing_cycles=4)
    traj = run_simulation(ieee39, c, relays, cfg)
    f = extract_features(traj, relay, 1.0, 60.0, dt=cfg.dt)
    scale = abs(relay.line_z)
    assert np.abs(f[1:6]).max() < 1e-3 and np.abs(f[7:12]).max() < 1e-3
    # the pre-fault sample is the load point seen by the relay
    k = int(round(1.0 / cfg.dt)) - 1
    zpre = traj.relay_series(relay.id)[k]
    assert f[0] == pytest.approx(zpre.real / scale) and f[6] == pytest.approx(zpre.imag / scale)
    br = ieee39.branch("L16-17")
    v = traj.v[k]
    bi = traj.bus_ids.index("16"), traj.bus_ids.index("17")
    vi, vj = v[bi[0]], v[bi[1]]
    oracle = vi / ((vi - vj) / br.z + vi * 1j * br.b_shunt / 2)
    assert zpre == pytest.approx(oracle, rel=1e-9)
    assert abs(zpre) > 2 * scale


# ---------------------------------------------------------------- corpus

@pytest.fixture(scope="module")
def small_corpus(wscc9):
    spec = load_suite(SMALL_SUITE)
    cfg = SimConfig.for_case(wscc9, t_end=2.0)
    ds = build_dataset(wscc9, spec, cfg, LINE_POLICY)
    return spec, cfg, ds


def test_row_count_is_product(wscc9, small_corpus):
    spec, cfg, ds = small_corpus
    relays = instantiate_relays(wscc9, LINE_POLICY)
    assert len(ds.rows) == ds.provenance["n_contingencies"] * len(relays)
    assert ds.provenance["n_contingencies"] == 8
    assert len({(r.contingency_id, r.relay_id) for r in ds.rows}) == len(ds.rows)
    assert ds.X.shape == (len(ds.rows), 12)
    assert np.isfinite(ds.X).all() and (np.abs(ds.X) <= CLIP).all()
    assert ds.y.sum() > 0
    assert ds.provenance["schema_hash"] == schema_hash(cfg.dt, 60.0)


def test_label_fidelity_by_resimulation(wscc9, small_corpus):
    spec, cfg, ds = small_corpus
    relays = instantiate_relays(wscc9, LINE_POLICY)
    by_id = {c.label: c for c in expand_suite(wscc9, spec, LINE_POLICY)}
    rng = np.random.default_rng(0)
    pick = rng.choice(len(ds.rows), size=20, replace=False)
    cache = {}
    for i in pick:
        row = ds.rows[i]
        if row.contingency_id not in cache:
            cache[row.contingency_id] = run_simulation(wscc9, by_id[row.contingency_id],
                                                       relays, cfg)
        traj = cache[row.contingency_id]
        operated = {e.relay_id for e in traj.relay_events}
        assert row.label == int(row.relay_id in operated)
        relay = next(r for r in relays if r.id == row.relay_id)
        assert np.array_equal(row.features, extract_features(traj, relay, 0.5, 60.0, dt=cfg.dt))


def test_rows_labeled_one_exactly_for_tripping_relays(wscc9, small_corpus):
    spec, cfg, ds = small_corpus
    relays = instantiate_relays(wscc9, LINE_POLICY)
    c = next(c for c in expand_suite(wscc9, spec, LINE_POLICY) if c.target == "L5-7")
    traj = run_simulation(wscc9, c, relays, cfg)
    operated = {e.relay_id for e in traj.relay_events}
    assert operated
    ones = {r.relay_id for r in ds.rows if r.contingency_id == c.label and r.label == 1}
    assert ones == operated


def test_no_samples_after_one_cycle(wscc9):
    relays = instantiate_relays(wscc9, LINE_POLICY)
    cfg = SimConfig.for_case(wscc9, t_end=2.0)
    c = ContingencySpec("line_fault", "L5-7", t_fault=0.5)
    traj = run_simulation(wscc9, c, relays, cfg)
    steps = sample_steps(cfg.dt, 60.0)
    k0 = int(round(0.5 / cfg.dt))
    assert traj.times[k0 + steps[-1]] <= 0.5 + 1 / 60 + 1e-12
    # features are unchanged when everything after the window is scrambled
    cut = k0 + steps[-1] + 1
    scrambled = SimpleNamespace(
        times=traj.times,
        relay_series=lambda rid: np.r_[traj.relay_series(rid)[:cut],
                                       np.full(len(traj.times) - cut, 7 + 7j)])
    for r in relays:
        assert np.array_equal(extract_features(traj, r, 0.5, 60.0, dt=cfg.dt),
                              extract_features(scrambled, r, 0.5, 60.0, dt=cfg.dt))


def test_quiescent_suite_all_zero_labels(wscc9):
    spec = load_suite('t_fault = 0.5\n[machine_outages]\ntargets = ["G3"]\n')
    ds = build_dataset(wscc9, spec, SimConfig.for_case(wscc9, t_end=1.5), LINE_POLICY)
    assert ds.y.sum() == 0 and len(ds.rows) == 12


def test_rebuild_is_byte_identical_and_round_trips(wscc9, small_corpus, tmp_path):
    spec, cfg, ds = small_corpus
    write_dataset(ds, tmp_path / "a.csv")
    again = build_dataset(wscc9, load_suite(SMALL_SUITE), cfg, LINE_POLICY, jobs=2)
    write_dataset(again, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = read_dataset(tmp_path / "a.csv")
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.y, ds.y)
    assert back.provenance["suite_hash"] == spec.digest()
    assert back.provenance["engine_version"]


def test_corrupt_dataset_files(tmp_path):
    ds = Dataset(feature_names(), [FeatureRow("c", "r", np.zeros(12), 1)], {})
    p = tmp_path / "d.csv"
    write_dataset(ds, p)
    good = p.read_text()
    for bad in ("", "x,y\n", good + good.splitlines()[1] + "\n",
                good.replace(",1\n", ",2\n"), good.replace(",1\n", ",\n")):
        p.write_text(bad)
        with pytest.raises(CaseError):
            read_dataset(p)
