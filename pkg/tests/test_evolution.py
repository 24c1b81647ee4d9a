import numpy as np
import pytest

from cpslab.evolution import (
    Fixation,
    MoranConfig,
    MoranTrace,
    Population,
    _INTEND,
    _KIND_CODE,
    _UPD,
    _noisy_fitness,
    _pure_fitness,
    moran_step,
    round_robin_fitness,
    run_moran,
    trace_winner,
)
from cpslab.game import (
    ALLC,
    ALLD,
    GRIM,
    TF2T,
    TFT,
    Action,
    DEFAULT_MATRIX,
    PayoffMatrix,
    StrategyKind,
    coin,
    initial_state,
    next_action,
)

C = Action.COOPERATE
D = Action.DEFECT


def test_population_validation():
    pop = Population((TFT, TF2T, TFT))
    assert pop.size == 3
    assert pop.members[1] == TF2T
    with pytest.raises(ValueError):
        Population((TFT,))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(initial_counts={TFT: -1, TF2T: 3}),
        dict(initial_counts={TFT: 1}),
        dict(initial_counts={TFT: 2}, rounds_max=0),
        dict(initial_counts={TFT: 2}, match_stages=0),
        dict(initial_counts={TFT: 2}, noise=1.0),
        dict(initial_counts={TFT: 2}, replicates=0),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        MoranConfig(**kwargs)


def test_config_defaults():
    cfg = MoranConfig({TFT: 50, TF2T: 50})
    assert cfg.population_size == 100
    assert cfg.rounds_max == 1000
    assert cfg.match_stages == 100
    assert cfg.noise == 0.0
    assert cfg.replicates == 1


def test_fitness_two_cooperators():
    fit = round_robin_fitness(Population((ALLC, ALLC)), 10)
    assert list(fit) == [30, 30]


def test_fitness_defector_exploits_cooperator():
    fit = round_robin_fitness(Population((ALLD, ALLC)), 10)
    assert list(fit) == [50, 0]


def test_fitness_homogeneous_symmetry():
    fit = round_robin_fitness(Population((TFT,) * 100), 100)
    assert np.all(fit == 99 * 300)


def test_fitness_shift_with_negative_sucker():
    m = PayoffMatrix(5, 3, 1, -1)
    fit = round_robin_fitness(Population((ALLD, ALLC)), 10, matrix=m)
    assert list(fit) == [60, 0]


def _all_histories(max_len):
    seqs = [[]]
    for length in range(1, max_len + 1):
        for bits in range(2 ** length):
            seqs.append([(bits >> i) & 1 for i in range(length)])
    return seqs


@pytest.mark.parametrize("sid", [ALLC, ALLD, GRIM, TFT, TF2T])
def test_tables_agree_with_next_action(sid):
    """Walk the compiled-engine tables against the reference strategy
    machine over every opponent history up to length 6."""
    code = _KIND_CODE[sid.kind]
    acts = (C, D)
    for seq in _all_histories(6):
        state = 0
        for cut in range(len(seq) + 1):
            table_action = int(_INTEND[code, state])
            history = [acts[b] for b in seq[:cut]]
            want, _ = next_action(initial_state(sid), history)
            assert acts[table_action] is want, (sid, seq, cut)
            if cut < len(seq):
                state = int(_UPD[code, state, seq[cut]])


def test_kernel_matches_reference_at_zero_noise():
    members = (ALLC, ALLD, GRIM, TFT, TF2T, TFT)
    rng = np.random.default_rng(0)
    kernel = _noisy_fitness(members, 7, 0.0, rng, DEFAULT_MATRIX)
    pure = _pure_fitness(members, 7, DEFAULT_MATRIX)
    assert np.array_equal(kernel, pure)
    assert list(kernel) == [84, 83, 90, 90, 89, 90]


def test_kernel_consumes_no_randomness_at_zero_noise():
    rng = np.random.default_rng(3)
    before = rng.bit_generator.state
    _noisy_fitness((TFT, TF2T, GRIM), 20, 0.0, rng, DEFAULT_MATRIX)
    assert rng.bit_generator.state == before


def test_degenerate_coins_in_kernel():
    rng = np.random.default_rng(1)
    fit = _noisy_fitness((coin(1.0), ALLC), 10, 0.0, rng, DEFAULT_MATRIX)
    assert list(fit) == [30, 30]
    fit = _noisy_fitness((coin(0.0), ALLC), 10, 0.0, rng, DEFAULT_MATRIX)
    assert list(fit) == [50, 0]


def test_coin_population_needs_rng():
    with pytest.raises(ValueError):
        round_robin_fitness(Population((coin(0.5), ALLC)), 10)
    with pytest.raises(ValueError):
        round_robin_fitness(Population((TFT, TFT)), 10, noise=0.1)


def test_noisy_kernel_regression():
    rng = np.random.default_rng(42)
    fit = _noisy_fitness((TFT, TFT, TF2T, TF2T), 50, 0.1, rng, DEFAULT_MATRIX)
    assert list(fit) == [412, 386, 382, 421]


def test_noisy_kernel_flip_rate():
    """Two unconditional cooperators at eps=0.05: per-stage expected score
    is 3(1-e)^2 + 2.5*2e(1-e) + e^2 = 2.9475, so 20000 stages should land
    near 58950 for both sides."""
    rng = np.random.default_rng(7)
    fit = _noisy_fitness((ALLC, ALLC), 20000, 0.05, rng, DEFAULT_MATRIX)
    assert list(fit) == [58868, 59013]
    assert all(57500 <= v <= 60300 for v in fit)


class StubRng:
    """Deterministic stand-in exposing the two draws moran_step makes."""

    def __init__(self, uniform, ints):
        self.uniform = uniform
        self.ints = list(ints)

    def random(self):
        return self.uniform

    def integers(self, n):
        return self.ints.pop(0)


def test_step_replaces_death_with_birth_clone():
    pop = Population((ALLC, ALLD, GRIM))
    fitness = (1.0, 2.0, 3.0)
    # uniforms landing in each fitness band: cumsum is (1, 3, 6)
    for uniform, birth in ((0.0, 0), (0.3, 1), (0.9, 2)):
        for death in range(3):
            new = moran_step(pop, fitness, StubRng(uniform, [death]))
            expected = list(pop.members)
            expected[death] = pop.members[birth]
            assert new.members == tuple(expected)
            assert new.size == 3
            # counts move by at most one per strategy
            for sid in (ALLC, ALLD, GRIM):
                delta = new.members.count(sid) - pop.members.count(sid)
                assert abs(delta) <= 1


def test_step_degenerate_fitness_always_picks_the_live_member():
    pop = Population((TFT, ALLD))
    for uniform in (0.0, 0.5, 0.999):
        new = moran_step(pop, (1.0, 0.0), StubRng(uniform, [1]))
        assert new.members == (TFT, TFT)


def test_step_all_zero_fitness_falls_back_to_uniform_birth():
    pop = Population((TFT, ALLD))
    new = moran_step(pop, (0.0, 0.0), StubRng(0.9, [1, 0]))
    assert new.members == (ALLD, ALLD)


def test_step_rejects_wrong_fitness_length():
    with pytest.raises(ValueError):
        moran_step(Population((TFT, TFT)), (1.0,), StubRng(0.5, [0]))


def test_step_homogeneous_population_is_fixed():
    pop = Population((TFT,) * 5)
    new = moran_step(pop, (1.0,) * 5, StubRng(0.42, [3]))
    assert new.members == pop.members


def test_already_fixated_population_ends_at_round_zero():
    traces = run_moran(MoranConfig({TFT: 100}, replicates=3))
    assert len(traces) == 3
    for trace in traces:
        assert trace.counts == ((100,),)
        assert trace.fixation == Fixation(winner=TFT, round=0)
        assert trace_winner(trace) == TFT


def test_small_duel_runs_to_fixation():
    cfg = MoranConfig({TFT: 1, ALLD: 1}, rounds_max=1000, match_stages=10, seed=2)
    (trace,) = run_moran(cfg)
    assert trace.fixation is not None
    assert len(trace.counts) == trace.fixation.round + 1
    assert max(trace.counts[-1]) == 2
    # absorbing: the winning strategy holds every slot in the last row only
    assert all(max(row) < 2 for row in trace.counts[:-1])


def test_counts_conserved_and_move_slowly():
    cfg = MoranConfig({TFT: 5, TF2T: 5}, rounds_max=50, match_stages=20, noise=0.05, seed=9)
    (trace,) = run_moran(cfg)
    for row in trace.counts:
        assert sum(row) == 10
    for prev, cur in zip(trace.counts, trace.counts[1:]):
        assert all(abs(b - a) <= 1 for a, b in zip(prev, cur))


def test_run_moran_is_deterministic():
    cfg = MoranConfig({TFT: 3, TF2T: 3}, rounds_max=100, match_stages=10, noise=0.1, seed=11, replicates=3)
    assert run_moran(cfg) == run_moran(cfg)
    other = MoranConfig({TFT: 3, TF2T: 3}, rounds_max=100, match_stages=10, noise=0.1, seed=12, replicates=3)
    assert run_moran(cfg) != run_moran(other)


def test_seeds_differ_between_replicates():
    cfg = MoranConfig({TFT: 2, ALLD: 2}, rounds_max=50, match_stages=10, seed=0, replicates=4)
    seeds = [t.seed for t in run_moran(cfg)]
    assert len(set(seeds)) == 4


def test_neutral_drift_small_population():
    """Unconditional cooperators and tit-for-tat are payoff-identical at
    zero noise, so fixation frequency must track the 50% starting share."""
    cfg = MoranConfig({ALLC: 3, TFT: 3}, rounds_max=10000, match_stages=10, seed=5, replicates=400)
    traces = run_moran(cfg)
    assert all(t.fixation is not None for t in traces)
    wins = sum(1 for t in traces if t.fixation.winner == TFT)
    assert 0.38 <= wins / 400 <= 0.62
    assert wins == 199


def test_trace_winner_plurality_and_tie():
    unfixed = MoranTrace(
        strategies=(TFT, TF2T),
        counts=((50, 50), (49, 51)),
        fixation=None,
        seed=0,
    )
    assert trace_winner(unfixed) == TF2T
    tied = MoranTrace(strategies=(TFT, TF2T), counts=((50, 50),), fixation=None, seed=0)
    assert trace_winner(tied) is None
