"""Property tests over randomly generated inputs."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from actgap.augmentation import AugmentationSpec, SimilarityMatrix, build_augmentation
from actgap.curves import LearningCurve, curve_auc, curve_to_csv, parse_curve, steps_to_threshold
from actgap.dqn import weighted_td_loss
from actgap.envs import ActionRealization, CartPole, ChainMDP, Pendulum, chain_optimal_q
from actgap.qcore import AgentHyperparams, TabularQ, Transition, oracle_q_update

finite = st.floats(-1e3, 1e3, allow_nan=False)
unit = st.floats(0.0, 1.0)


@st.composite
def similarity(draw, size):
    upper = draw(hnp.arrays(np.float64, (size, size), elements=unit))
    k = np.triu(upper, 1)
    k = k + k.T
    np.fill_diagonal(k, 1.0)
    return SimilarityMatrix(k)


@st.composite
def curves(draw, max_len=30):
    n = draw(st.integers(0, max_len))
    gaps = draw(st.lists(st.integers(1, 500), min_size=n, max_size=n))
    rets = draw(st.lists(finite, min_size=n, max_size=n))
    eps = draw(st.lists(unit, min_size=n, max_size=n))
    losses = draw(st.lists(st.none() | st.floats(0, 1e6), min_size=n, max_size=n))
    c = LearningCurve()
    for s, r, e, l in zip(np.cumsum(gaps), rets, eps, losses):
        c.append(int(s), r, e, l)
    return c


@given(st.sampled_from(["none", "duplicate", "semi_duplicate", "random", "noop"]),
       st.integers(1, 6), unit, st.integers(2, 5))
def test_similarity_invariants(kind, n, h, base):
    table, k = build_augmentation(AugmentationSpec(kind, n=n, h=h), base)
    e = k.entries
    assert e.shape == (len(table), len(table))
    assert np.array_equal(e, e.T) and np.all(np.diag(e) == 1.0)
    assert np.all((e >= 0) & (e <= 1))


@given(st.integers(1, 8), st.integers(2, 4))
def test_duplicate_index_maps_to_base(n, base):
    table, k = build_augmentation(AugmentationSpec("duplicate", n=n), base)
    for j, entry in enumerate(table):
        assert entry.base_action == j % base
    for i in range(len(table)):
        for j in range(len(table)):
            assert k[i, j] == float(i % base == j % base)


@given(st.data())
@settings(max_examples=200)
def test_oracle_update_identity_equals_q_learning(data):
    s_count, a_count = data.draw(st.integers(1, 4)), data.draw(st.integers(1, 5))
    values = data.draw(hnp.arrays(np.float64, (s_count, a_count), elements=finite))
    s, s2 = data.draw(st.integers(0, s_count - 1)), data.draw(st.integers(0, s_count - 1))
    a = data.draw(st.integers(0, a_count - 1))
    r, terminal = data.draw(finite), data.draw(st.booleans())
    alpha, gamma = data.draw(st.floats(1e-3, 1.0)), data.draw(st.floats(0.0, 0.999))
    hp = AgentHyperparams(alpha=alpha, gamma=gamma)
    q = TabularQ(s_count, a_count, values.copy())
    oracle_q_update(q, Transition(s, a, r, s2, terminal), SimilarityMatrix(np.eye(a_count)), hp)
    expected = values.copy()
    target = r if terminal else r + gamma * values[s2].max()
    expected[s, a] = values[s, a] + alpha * (target - values[s, a])
    assert np.array_equal(q.values, expected)


@given(st.data())
def test_only_source_row_changes(data):
    k = data.draw(similarity(3))
    values = data.draw(hnp.arrays(np.float64, (4, 3), elements=finite))
    q = TabularQ(4, 3, values.copy())
    oracle_q_update(q, Transition(1, 2, 1.0, 3, False), k, AgentHyperparams())
    mask = np.ones(4, bool)
    mask[1] = False
    assert np.array_equal(q.values[mask], values[mask])


@given(st.data())
def test_weighted_loss_nonnegative_and_gradient_zero_where_k_zero(data):
    size = data.draw(st.integers(1, 5))
    batch = data.draw(st.integers(1, 6))
    k = data.draw(similarity(size))
    q = data.draw(hnp.arrays(np.float64, (batch, size), elements=finite))
    actions = np.array(data.draw(st.lists(st.integers(0, size - 1), min_size=batch,
                                          max_size=batch)))
    y = data.draw(hnp.arrays(np.float64, batch, elements=finite))
    loss, grad = weighted_td_loss(q, actions, y, k)
    assert loss >= 0
    w = k.entries[actions]
    assert np.all(grad[w == 0] == 0)


@given(curves())
def test_csv_roundtrip(curve):
    assert parse_curve(curve_to_csv(curve)) == curve


@given(curves(), finite, st.integers(1, 10))
def test_threshold_reached_means_window_mean(curve, threshold, window):
    hit = steps_to_threshold(curve, threshold, window)
    if hit is None:
        return
    end = curve.steps.index(hit) + 1
    assert end >= window
    assert np.mean(curve.returns[end - window:end]) >= threshold - 1e-9 * max(1, abs(threshold))


@given(curves(max_len=10), st.integers(1, 5000))
def test_auc_bounded_by_returns(curve, budget):
    if len(curve) == 0:
        return
    auc = curve_auc(curve, budget)
    assert min(curve.returns) - 1e-9 <= auc <= max(curve.returns) + 1e-9


@given(st.integers(0, 2**32), st.lists(st.integers(0, 1), min_size=1, max_size=60),
       st.sampled_from([CartPole, Pendulum, ChainMDP]))
@settings(max_examples=50)
def test_env_determinism(seed, actions, cls):
    a, b = cls(), cls()
    a.reset(seed)
    b.reset(seed)
    for act in actions:
        ra, rb = a.step(ActionRealization(act)), b.step(ActionRealization(act))
        assert ra.observation.tobytes() == rb.observation.tobytes()
        assert ra.reward == rb.reward
        if ra.terminated or ra.truncated:
            break


@given(st.integers(2, 12), st.floats(0.0, 0.99))
def test_chain_q_satisfies_bellman(n, gamma):
    chain = ChainMDP(n)
    q = chain_optimal_q(chain, gamma)
    for s in range(n):
        for a in range(2):
            s2, r, done = chain.transition(s, a)
            assert abs(q[s, a] - (r if done else r + gamma * q[s2].max())) < 1e-9


@given(st.floats(-50, 50), st.floats(-8, 8), st.integers(0, 2), unit)
def test_pendulum_reward_bound(theta, theta_dot, action, magnitude):
    env = Pendulum()
    env.reset(0)
    env.state = (theta, theta_dot)
    res = env.step(ActionRealization(action, magnitude))
    assert res.reward <= 0.0
    assert -8.0 <= env.state[1] <= 8.0
