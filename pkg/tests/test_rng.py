import numpy as np

from gridlight.rng import DRAWS_PER_SHOT, ShotStream, shot_uniforms


def test_blocks_depend_only_on_shot_index():
    whole = shot_uniforms(42, 0, 1000)
    parts = np.concatenate([shot_uniforms(42, a, a + 100) for a in range(0, 1000, 100)])
    np.testing.assert_array_equal(whole, parts)
    assert whole.shape == (1000, DRAWS_PER_SHOT)


def test_seeds_differ():
    assert not np.array_equal(shot_uniforms(1, 0, 10), shot_uniforms(2, 0, 10))


def test_stream_walks_the_blocks():
    stream = ShotStream(7)
    draws = [stream.random() for _ in range(3 * DRAWS_PER_SHOT)]
    np.testing.assert_array_equal(draws, shot_uniforms(7, 0, 3).ravel())


def test_full_width_seed():
    u = shot_uniforms((1 << 64) - 1, 10, 12)
    assert np.all((u >= 0) & (u < 1))
