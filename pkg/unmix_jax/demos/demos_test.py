from unmix_jax.demos import convergence_curve
from unmix_jax.demos import synthetic_unmixing

# Run all the demos in test mode, which shrinks the scenes and turns off printing


def test_synthetic_unmixing():
    results = synthetic_unmixing.main(test_mode=True)
    assert set(results) == {"sudap", "ls", "ls_sum1", "oracle"}


def test_convergence_curve():
    curve = convergence_curve.main(test_mode=True)
    assert len(curve) > 1
    assert curve.re_db[-1] < curve.re_db[0]
