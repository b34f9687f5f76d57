"""End-to-end checks for the secure training engines.

Every test drives real parties over loopback sessions and compares the
reconstructed models against the float64 reference replaying the same
batch schedule. Truncation puts each run a few 2^-20 ulps away from the
reference, never bit-equal, so tolerances here are stated in ulps.
"""

import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secregress.baseline import (
    SIGMOID_POLY,
    auc,
    poly_sigmoid,
    rmse,
    surrogate_loss,
    train_plain,
)
from secregress.data import (
    build_batch_schedule,
    make_classification_data,
    make_regression_data,
    quantize,
)
from secregress.errors import BatchTooLarge, PolicyMismatch, TripleExhausted
from secregress.protocols import (
    HorizontalEngine,
    TrainingConfig,
    VerticalEngine,
    horizontal_schedule,
    horizontal_triple_needs,
    select_batch_owner,
    sigmoid_poly_shares,
    train_horizontal_linear,
    train_horizontal_logistic,
    train_vertical_linear,
    train_vertical_logistic,
    vertical_triple_needs,
)
from secregress.ring import FixedPointConfig, RingMatrix
from secregress.rng import CounterDrbg
from secregress.sharing import reconstruct, share_matrix
from secregress.smm import TriplePool, generate_triple, read_triples, write_triples
from secregress.transport import TransportError, loopback_sessions

ULP = 2.0 ** -20
TOL = 10 * ULP  # oracle-equivalence budget per coordinate
FX = FixedPointConfig(20)


def run_parties(n, cfg, fns, timeout=60.0):
    """Run one callable per party over loopback threads.

    Raises the first non-transport party error (a real failure usually
    drags the peers into timeouts, which would mask it otherwise).
    """
    rngs = [cfg.private_rng(i) for i in range(n)]
    sessions = loopback_sessions(n, rngs, timeout=timeout)
    results = [None] * n
    errors = [None] * n

    def work(i):
        try:
            results[i] = fns[i](sessions[i])
        except BaseException as exc:  # noqa: BLE001 - re-raised below
            errors[i] = exc
        finally:
            sessions[i].close()

    threads = [threading.Thread(target=work, args=(i,), daemon=True)
               for i in range(n)]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout + 30)
    real = [e for e in errors if e is not None
            and not isinstance(e, TransportError)]
    if real:
        raise real[0]
    for e in errors:
        if e is not None:
            raise e
    return results


def split_rows(X, y, cuts):
    """Row slices per party from cumulative cut points."""
    bounds = [0, *cuts, len(X)]
    return [(X[bounds[i]:bounds[i + 1]], y[bounds[i]:bounds[i + 1]])
            for i in range(len(bounds) - 1)]


def run_horizontal(cfg, X, y, cuts, task="linear"):
    parts = split_rows([list(r) for r in X], list(y), cuts)
    train = (train_horizontal_linear if task == "linear"
             else train_horizontal_logistic)
    fns = [
        (lambda s, xi=xi, yi=yi: train(s, xi, yi, cfg))
        for xi, yi in parts
    ]
    return run_parties(len(parts), cfg, fns)


def run_vertical(cfg, X, y, col_cuts, task="linear"):
    bounds = [0, *col_cuts, len(X[0])]
    blocks = [[list(r[bounds[i]:bounds[i + 1]]) for r in X]
              for i in range(len(bounds) - 1)]
    train = (train_vertical_linear if task == "linear"
             else train_vertical_logistic)
    fns = [
        (lambda s, xb=xb, lab=(list(y) if i == cfg.label_party else None):
         train(s, xb, lab, config=cfg))
        for i, xb in enumerate(blocks)
    ]
    return run_parties(len(blocks), cfg, fns)


def max_drift(weights, reference):
    return max(abs(a - b) for a, b in zip(weights, reference))


# -- batch-owner policy ----------------------------------------------------

def test_sequential_owner_is_round_robin():
    assert [select_batch_owner(t, 3, "sequential", 0)
            for t in range(4)] == [0, 1, 2, 0]


def test_random_owner_reproducible_and_seed_sensitive():
    a = [select_batch_owner(t, 4, "random", "s1") for t in range(64)]
    b = [select_batch_owner(t, 4, "random", "s1") for t in range(64)]
    c = [select_batch_owner(t, 4, "random", "s2") for t in range(64)]
    assert a == b
    assert a != c
    assert set(a) <= {0, 1, 2, 3}


def test_unknown_owner_policy_rejected():
    with pytest.raises(PolicyMismatch):
        select_batch_owner(0, 2, "alphabetical", 0)


def test_horizontal_schedule_skips_small_parties():
    cfg = TrainingConfig(batch_size=5, iterations=9, seed="sched")
    owners, local_rows, global_rows = horizontal_schedule(cfg, [12, 3, 20])
    assert len(owners) == 9
    assert 1 not in owners  # 3 rows cannot fill a batch of 5
    offsets = [0, 12, 15]
    sizes = [12, 3, 20]
    for t, owner in enumerate(owners):
        assert len(local_rows[t]) == 5
        assert all(0 <= r < sizes[owner] for r in local_rows[t])
        assert global_rows[t] == [offsets[owner] + r for r in local_rows[t]]


def test_horizontal_schedule_no_eligible_owner():
    cfg = TrainingConfig(batch_size=5, iterations=3)
    with pytest.raises(BatchTooLarge):
        horizontal_schedule(cfg, [3, 2])


@settings(max_examples=25, deadline=None)
@given(
    sizes=st.lists(st.integers(min_value=0, max_value=30), min_size=2,
                   max_size=4),
    batch=st.integers(min_value=1, max_value=8),
)
def test_horizontal_schedule_rows_always_in_owner_range(sizes, batch):
    cfg = TrainingConfig(batch_size=batch, iterations=6, seed="prop")
    if not any(sz >= batch for sz in sizes):
        with pytest.raises(BatchTooLarge):
            horizontal_schedule(cfg, sizes)
        return
    owners, local_rows, _ = horizontal_schedule(cfg, sizes)
    again = horizontal_schedule(cfg, sizes)
    assert (owners, local_rows) == (again[0], again[1])
    for t, owner in enumerate(owners):
        assert sizes[owner] >= batch
        assert len(set(local_rows[t])) == batch
        assert all(0 <= r < sizes[owner] for r in local_rows[t])


# -- shared sigmoid --------------------------------------------------------

def _grid_poly(z):
    """The polynomial the shares actually evaluate: coefficients snap to
    the 2^-20 grid, which costs up to half an ulp per coefficient and
    scales with z^3, so the float-coefficient curve is the wrong
    reference away from small z."""
    q = [float(quantize(c)) for c in SIGMOID_POLY]
    return q[0] + q[1] * z + q[2] * z * z + q[3] * z ** 3


@pytest.mark.parametrize("variant", ["smm1", "smm2"])
def test_sigmoid_shares_track_polynomial(variant):
    zs = [0.0, 1.0, -1.0, 0.5, -0.25, 3.0, -3.0]
    cfg = TrainingConfig(smm_variant=variant, seed="sig")
    z_enc = RingMatrix.encode_rows([[v] for v in zs], FX)
    shares = share_matrix(z_enc, 2, CounterDrbg("sig-shares"))
    fns = [
        (lambda s, sh=shares[i]: sigmoid_poly_shares(s, sh, cfg))
        for i in range(2)
    ]
    out = run_parties(2, cfg, fns)
    got = [row[0] for row in
           reconstruct(out).decode_rows(FX, frac_bits=40)]
    for z, val in zip(zs, got):
        assert abs(val - _grid_poly(z)) <= 3 * ULP
        if abs(z) <= 1.0:
            assert abs(val - poly_sigmoid(z)) <= 3 * ULP
    assert abs(got[0] - 0.5) <= ULP          # z = 0
    assert abs(got[1] - 0.701) <= 3 * ULP    # z = 1
    assert abs(got[2] - 0.299) <= 3 * ULP    # z = -1


# -- horizontal linear -----------------------------------------------------

@pytest.mark.parametrize("variant", ["smm1", "smm2"])
def test_horizontal_linear_matches_reference(variant):
    X, y = make_regression_data(120, 4, seed=7)
    cfg = TrainingConfig(learning_rate=0.1, batch_size=8, iterations=40,
                         smm_variant=variant, seed="h-eq")
    res = run_horizontal(cfg, X, y, [70])
    _, _, global_rows = horizontal_schedule(cfg, [70, 50])
    w_ref = train_plain(X, y, global_rows, cfg.effective_rate())
    assert res[0].weights_raw == res[1].weights_raw
    assert max_drift(res[0].weights, w_ref) <= TOL
    r_sec = rmse(y, np.asarray(X) @ np.asarray(res[0].weights))
    r_ref = rmse(y, np.asarray(X) @ w_ref)
    assert abs(r_sec - r_ref) < 5e-5


def test_horizontal_single_feature_recovers_slope():
    xs = list(quantize(np.linspace(0.5, 1.5, 8)))
    X = [[v] for v in xs]
    y = list(quantize([2.0 * v for v in xs]))
    cfg = TrainingConfig(learning_rate=0.1, batch_size=2, iterations=100,
                         seed="slope")
    res = run_horizontal(cfg, X, y, [4])
    assert abs(res[0].weights[0] - 2.0) <= 0.05


def test_zero_learning_rate_leaves_zero_init():
    X, y = make_regression_data(30, 3, seed=3)
    cfg = TrainingConfig(learning_rate=0.0, batch_size=5, iterations=12,
                         seed="frozen")
    res = run_horizontal(cfg, X, y, [15])
    assert res[0].weights_raw == [0, 0, 0]
    assert res[0].weights == [0.0, 0.0, 0.0]


def test_horizontal_three_parties_matches_reference():
    X, y = make_regression_data(300, 5, seed=17)
    cfg = TrainingConfig(learning_rate=0.1, batch_size=10, iterations=50,
                         seed="h3")
    res = run_horizontal(cfg, X, y, [120, 220])
    _, _, global_rows = horizontal_schedule(cfg, [120, 100, 80])
    w_ref = train_plain(X, y, global_rows, cfg.effective_rate())
    assert res[0].weights_raw == res[1].weights_raw == res[2].weights_raw
    assert max_drift(res[0].weights, w_ref) <= TOL
    assert res[0].owners[:6] == [0, 1, 2, 0, 1, 2]


def test_one_party_holding_everything_matches_reference():
    """The partition must not matter: a degenerate split where one party
    owns every row follows the single-machine trajectory."""
    X, y = make_regression_data(40, 3, seed=9)
    cfg = TrainingConfig(learning_rate=0.1, batch_size=5, iterations=30,
                         seed="lopsided")
    res = run_horizontal(cfg, X, y, [40])
    assert set(res[0].owners) == {0}
    _, _, global_rows = horizontal_schedule(cfg, [40, 0])
    w_ref = train_plain(X, y, global_rows, cfg.effective_rate())
    assert max_drift(res[0].weights, w_ref) <= TOL


def test_batch_shares_die_with_their_iteration():
    """Batch share buffers are cleared before control returns, and junk
    written into the cleared slot must not reach the next iteration."""
    X, y = make_regression_data(40, 3, seed=21)
    cfg = TrainingConfig(learning_rate=0.1, batch_size=5, iterations=10,
                         seed="hygiene")
    clean = run_horizontal(cfg, X, y, [25])

    seen = []

    def poison(t, engine):
        seen.append(engine._batch_shares)
        engine._batch_shares = ("sentinel", t)

    parts = split_rows([list(r) for r in X], list(y), [25])
    fns = [
        (lambda s, xi=xi, yi=yi:
         train_horizontal_linear(s, xi, yi, cfg, on_iteration=poison))
        for xi, yi in parts
    ]
    poisoned = run_parties(2, cfg, fns)
    assert all(v is None for v in seen)
    assert poisoned[0].weights_raw == clean[0].weights_raw


def test_config_disagreement_is_detected():
    X, y = make_regression_data(30, 3, seed=5)
    parts = split_rows([list(r) for r in X], list(y), [15])
    cfg_a = TrainingConfig(learning_rate=0.1, batch_size=5, iterations=5,
                           seed="agree")
    cfg_b = TrainingConfig(learning_rate=0.01, batch_size=5, iterations=5,
                           seed="agree")
    fns = [
        (lambda s: train_horizontal_linear(s, *parts[0], cfg_a)),
        (lambda s: train_horizontal_linear(s, *parts[1], cfg_b)),
    ]
    with pytest.raises(PolicyMismatch):
        run_parties(2, cfg_a, fns, timeout=5.0)


# -- vertical linear -------------------------------------------------------

@pytest.mark.parametrize("variant", ["smm1", "smm2"])
def test_vertical_linear_matches_reference(variant):
    X, y = make_regression_data(300, 5, seed=31)
    cfg = TrainingConfig(learning_rate=0.1, batch_size=10, iterations=50,
                         smm_variant=variant, seed="v-eq")
    res = run_vertical(cfg, X, y, [3])
    schedule = build_batch_schedule(300, 10, 50, "v-eq")
    w_ref = train_plain(X, y, schedule, cfg.effective_rate())
    w_sec = res[0].weights + res[1].weights  # blocks: columns 0-2 and 3-4
    assert res[0].block_sizes == [3, 2]
    assert max_drift(w_sec, w_ref) <= TOL


def test_vertical_sum_of_two_features():
    rng = CounterDrbg("vsum-data")
    x1 = quantize([rng.randrange(1000) / 1000 for _ in range(40)])
    x2 = quantize([rng.randrange(1000) / 1000 for _ in range(40)])
    X = [[a, b] for a, b in zip(x1, x2)]
    y = [a + b for a, b in zip(x1, x2)]
    cfg = TrainingConfig(learning_rate=0.1, batch_size=5, iterations=200,
                         seed="vsum")
    res = run_vertical(cfg, X, y, [1])
    assert abs(res[0].weights[0] - 1.0) <= 0.05
    assert abs(res[1].weights[0] - 1.0) <= 0.05


def test_vertical_zero_labels_barely_moves():
    """All-zero labels with zero init keep the model at zero up to
    truncation noise (the share-wise rounding carries make exact zero
    unattainable, so this asserts the honest drift bound)."""
    X, _ = make_regression_data(60, 4, seed=41)
    y = [0.0] * 60
    cfg = TrainingConfig(learning_rate=0.1, batch_size=6, iterations=100,
                         seed="zeros")
    res = run_vertical(cfg, X, y, [2])
    for r in res:
        assert all(abs(w) <= 1e-4 for w in r.weights)


def test_vertical_three_parties_matches_reference():
    X, y = make_regression_data(200, 5, seed=47)
    cfg = TrainingConfig(learning_rate=0.1, batch_size=10, iterations=30,
                         seed="v3", label_party=2)
    res = run_vertical(cfg, X, y, [2, 4])
    schedule = build_batch_schedule(200, 10, 30, "v3")
    w_ref = train_plain(X, y, schedule, cfg.effective_rate())
    w_sec = res[0].weights + res[1].weights + res[2].weights
    assert [r.block_sizes for r in res] == [[2, 2, 1]] * 3
    assert max_drift(w_sec, w_ref) <= TOL


def test_vertical_labels_must_sit_with_configured_party():
    X, y = make_regression_data(20, 2, seed=51)
    cfg = TrainingConfig(batch_size=5, iterations=2, seed="mislabel")
    blocks = [[[r[0]] for r in X], [[r[1]] for r in X]]
    fns = [
        (lambda s, xb=xb: train_vertical_linear(s, xb, list(y), config=cfg))
        for xb in blocks  # both supply labels; party 1 must refuse
    ]
    with pytest.raises(ValueError):
        run_parties(2, cfg, fns, timeout=5.0)


# -- logistic --------------------------------------------------------------

def test_horizontal_logistic_separable_auc():
    X, y = make_classification_data(200, 2, seed=61)
    cfg = TrainingConfig(learning_rate=0.5, batch_size=10, iterations=60,
                         seed="hlog")
    res = run_horizontal(cfg, X, y, [120], task="logistic")
    _, _, global_rows = horizontal_schedule(cfg, [120, 80])
    w_ref = train_plain(X, y, global_rows, cfg.effective_rate(),
                         task="logistic-poly")
    a_ref = auc(y, np.asarray(X) @ w_ref)
    a_sec = auc(y, np.asarray(X) @ np.asarray(res[0].weights))
    assert a_ref >= 0.95
    assert a_sec >= 0.95
    assert abs(a_sec - a_ref) <= 0.02


def test_vertical_logistic_separable_auc():
    X, y = make_classification_data(200, 2, seed=67)
    cfg = TrainingConfig(learning_rate=0.5, batch_size=10, iterations=60,
                         seed="vlog", label_party=1)
    res = run_vertical(cfg, X, y, [1], task="logistic")
    schedule = build_batch_schedule(200, 10, 60, "vlog")
    w_ref = train_plain(X, y, schedule, cfg.effective_rate(),
                         task="logistic-poly")
    a_ref = auc(y, np.asarray(X) @ w_ref)
    w_sec = res[0].weights + res[1].weights
    a_sec = auc(y, np.asarray(X) @ np.asarray(w_sec))
    assert a_ref >= 0.95
    assert a_sec >= 0.95
    assert abs(a_sec - a_ref) <= 0.02


def test_logistic_first_step_is_the_surrogate_gradient():
    """One sample, one full-weight step: the recovered model equals the
    negated surrogate gradient at w = 0, checked against both the closed
    form (sigma(0) - y) x and a central finite difference."""
    x = [0.25, 0.75, 0.5]
    cfg = TrainingConfig(learning_rate=1.0, batch_size=1, iterations=1,
                         seed="gradchk")
    res = run_horizontal(cfg, [x, x], [1.0, 1.0], [1], task="logistic")
    grad_sec = [-w for w in res[0].weights]
    closed = [(poly_sigmoid(0.0) - 1.0) * v for v in x]
    assert max_drift(grad_sec, closed) <= 5 * ULP
    eps = 1e-4
    for j in range(3):
        wp = np.zeros(3)
        wm = np.zeros(3)
        wp[j] += eps
        wm[j] -= eps
        fd = (surrogate_loss(np.asarray(x) @ wp, [1.0])
              - surrogate_loss(np.asarray(x) @ wm, [1.0])) / (2 * eps)
        assert abs(grad_sec[j] - fd) <= 1e-3 * max(abs(fd), 1e-6)


def test_logistic_all_positive_first_error_is_minus_half():
    """With every label 1 and zero init the first-iteration residual is
    sigma(0) - 1 = -0.5, so one step moves each weight by
    +0.5 * lr * mean(x_j) up to truncation noise."""
    X = [[0.5, 0.25], [0.75, 1.0]]
    cfg = TrainingConfig(learning_rate=1.0, batch_size=2, iterations=1,
                         seed="allpos")
    res = run_horizontal(cfg, X, [1.0, 1.0], [2], task="logistic")
    expected = [0.5 * (0.5 + 0.75) / 2, 0.5 * (0.25 + 1.0) / 2]
    assert max_drift(res[0].weights, expected) <= 5 * ULP


# -- SMM variant interchangeability ----------------------------------------

def test_variants_land_on_the_same_model():
    """Triple-based and triple-free products are interchangeable: same
    seed, same schedule, models equal up to accumulated truncation noise
    (bit-equality is out of reach because the two variants randomize the
    pre-truncation shares differently)."""
    X, y = make_regression_data(100, 4, seed=71)
    out = {}
    for variant in ("smm1", "smm2"):
        cfg = TrainingConfig(learning_rate=0.1, batch_size=8, iterations=40,
                             smm_variant=variant, seed="swap")
        out[variant] = run_horizontal(cfg, X, y, [60])[0].weights
    assert max_drift(out["smm1"], out["smm2"]) <= 2 * TOL


# -- triple accounting and file pools --------------------------------------

def test_triple_draws_match_the_projection():
    X, y = make_classification_data(40, 3, seed=81)
    cfg = TrainingConfig(learning_rate=0.5, batch_size=6, iterations=8,
                         seed="draws")
    parts = split_rows([list(r) for r in X], list(y), [22])
    pools = []

    def party(s, xi, yi):
        eng = HorizontalEngine(s, cfg, "logistic")
        pools.append(eng.pool)
        return eng.run(xi, yi)

    fns = [(lambda s, xi=xi, yi=yi: party(s, xi, yi)) for xi, yi in parts]
    run_parties(2, cfg, fns)
    need = horizontal_triple_needs(cfg, "logistic", 2, 3)
    for pool in pools:
        assert pool.consumed == need


def test_vertical_triple_draws_match_the_projection():
    X, y = make_regression_data(30, 5, seed=83)
    cfg = TrainingConfig(learning_rate=0.1, batch_size=5, iterations=6,
                         seed="vdraws")
    bounds = [0, 2, 4, 5]
    blocks = [[list(r[bounds[i]:bounds[i + 1]]) for r in X]
              for i in range(3)]
    pools = []

    def party(s, i, xb):
        eng = VerticalEngine(s, cfg, "linear")
        pools.append(eng.pool)
        return eng.run(xb, list(y) if i == cfg.label_party else None)

    fns = [(lambda s, i=i, xb=xb: party(s, i, xb))
           for i, xb in enumerate(blocks)]
    run_parties(3, cfg, fns)
    need = vertical_triple_needs(cfg, "linear", [2, 2, 1])
    for pool in pools:
        assert pool.consumed == need


def test_file_pool_replay_and_exhaustion(tmp_path):
    X, y = make_regression_data(20, 2, seed=91)
    cfg = TrainingConfig(learning_rate=0.1, batch_size=4, iterations=6,
                         seed="filepool")
    need = horizontal_triple_needs(cfg, "linear", 2, 2)
    gen = CounterDrbg("filepool-gen")
    triples = []
    for (x_dim, y_dim, z_dim), count in sorted(need.items()):
        for i in range(count):
            triples.append(generate_triple(x_dim, y_dim, z_dim,
                                           gen.child("t", x_dim, y_dim, i)))
    path = tmp_path / "pool.bin"
    write_triples(str(path), triples)

    parts = split_rows([list(r) for r in X], list(y), [12])
    fns = [
        (lambda s, xi=xi, yi=yi:
         train_horizontal_linear(
             s, xi, yi, cfg,
             pool=TriplePool.from_triples(read_triples(str(path)))))
        for xi, yi in parts
    ]
    res = run_parties(2, cfg, fns)
    _, _, global_rows = horizontal_schedule(cfg, [12, 8])
    w_ref = train_plain(X, y, global_rows, cfg.effective_rate())
    assert max_drift(res[0].weights, w_ref) <= TOL

    starved = [
        (lambda s, xi=xi, yi=yi:
         train_horizontal_linear(
             s, xi, yi, cfg,
             pool=TriplePool.from_triples(read_triples(str(path))[:-1])))
        for xi, yi in parts
    ]
    with pytest.raises(TripleExhausted):
        run_parties(2, cfg, starved, timeout=5.0)
