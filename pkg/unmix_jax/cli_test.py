import pytest

from unmix_jax.cli import main
from unmix_jax.io import read_abundance, read_cube, read_curve_csv
from unmix_jax.model import column_feasibility


def simulate(prefix, m=4, rows=5, cols=5, snr_db="30", min_angle="10", seed=0):
    return main([
        "simulate", "--library", "synthetic:40", "--m", str(m), "--rows", str(rows), "--cols", str(cols),
        "--snr-db", snr_db, "--min-angle", min_angle, "--seed", str(seed), "--out-prefix", str(prefix)
    ])


def unmix(prefix, out, *flags, threads=None):
    argv = [] if threads is None else ["--threads", str(threads)]
    argv += ["unmix", "--cube", f"{prefix}.cube", "--endmembers", f"{prefix}.endmembers.csv", "--out", str(out)]
    return main(argv + list(flags))


def test_simulate(tmp_path, capsys):
    prefix = tmp_path / "scene"
    assert simulate(prefix) == 0
    X = read_cube(f"{prefix}.cube")
    A = read_abundance(f"{prefix}.truth")
    assert X.shape == (5, 5) and X.n_bands == 224
    assert A.data.shape == (4, 25)
    assert (tmp_path / "scene.endmembers.csv").exists()
    out = capsys.readouterr().out
    assert "endmembers: synthetic_" in out
    assert "measured_snr_db:" in out


def test_unmix_against_oracle(tmp_path, capsys):
    prefix = tmp_path / "scene"
    assert simulate(prefix) == 0
    assert unmix(prefix, tmp_path / "oracle.ab", "--solver", "oracle") == 0
    capsys.readouterr()

    curve_path = tmp_path / "curve.csv"
    code = unmix(prefix, tmp_path / "sudap.ab", "--reference", str(tmp_path / "oracle.ab"), "--truth",
                 f"{prefix}.truth", "--curve", str(curve_path), "--rel-tol", "1e-12", "--max-sweeps", "5000")
    assert code == 0
    out = capsys.readouterr().out
    values = dict(line.split(": ", 1) for line in out.splitlines())
    assert values["solver"] == "sudap"
    assert float(values["re_db"]) <= -100.0
    assert values["feasible"] == "True"
    assert "nmse_db" in values

    A_hat = read_abundance(tmp_path / "sudap.ab")
    assert A_hat.shape == (5, 5)
    assert column_feasibility(A_hat).feasible
    curve = read_curve_csv(curve_path)
    assert curve.sweep[0] == 0
    assert len(curve) >= 2
    assert curve.re_db[-1] <= -100.0
    assert curve.nmse_db is not None


def test_curve_without_references(tmp_path):
    prefix = tmp_path / "scene"
    assert simulate(prefix) == 0
    curve_path = tmp_path / "curve.csv"
    assert unmix(prefix, tmp_path / "a.ab", "--curve", str(curve_path), "--max-sweeps", "50") == 0
    curve = read_curve_csv(curve_path)
    assert len(curve.sweep) >= 2
    assert curve.re_db is None
    assert curve.nmse_db is None
    assert curve.unconverged is None
    assert curve_path.read_text().splitlines()[0] == "sweep,time_s,objective,re_db,nmse_db,unconverged"


def test_single_endmember_curve(tmp_path):
    prefix = tmp_path / "scene"
    assert simulate(prefix, m=1) == 0
    curve_path = tmp_path / "curve.csv"
    assert unmix(prefix, tmp_path / "a.ab", "--curve", str(curve_path), "--truth", f"{prefix}.truth") == 0
    assert curve_path.read_text().splitlines() == ["sweep,time_s,objective,re_db,nmse_db,unconverged"]
    assert len(read_curve_csv(curve_path).sweep) == 0


def test_bad_library_exit_code(tmp_path):
    library = tmp_path / "lib.csv"
    for text in ("a,b\n1,2\n3,4,5\n", "a,b\n1,nan\n3,4\n"):
        library.write_text(text)
        code = main(["simulate", "--library", str(library), "--m", "1", "--rows", "2", "--cols", "2",
                     "--out-prefix", str(tmp_path / "scene")])
        assert code == 9


def test_other_solvers(tmp_path):
    prefix = tmp_path / "scene"
    assert simulate(prefix, m=3) == 0
    for solver in ("ls", "ls-sum1"):
        assert unmix(prefix, tmp_path / f"{solver}.ab", "--solver", solver) == 0
        assert read_abundance(tmp_path / f"{solver}.ab").data.shape == (3, 25)
    assert unmix(prefix, tmp_path / "ls.ab", "--solver", "ls", "--curve", str(tmp_path / "c.csv")) == 2


def test_noiseless_scene(tmp_path, capsys):
    prefix = tmp_path / "scene"
    assert simulate(prefix, m=3, snr_db="inf") == 0
    capsys.readouterr()
    assert unmix(prefix, tmp_path / "a.ab", "--truth", f"{prefix}.truth", "--rel-tol", "1e-14") == 0
    values = dict(line.split(": ", 1) for line in capsys.readouterr().out.splitlines())
    assert float(values["nmse_db"]) <= -140.0


def test_threads_are_bit_identical(tmp_path):
    prefix = tmp_path / "scene"
    assert simulate(prefix, rows=6, cols=6) == 0
    flags = ("--block-size", "16", "--max-sweeps", "200")
    assert unmix(prefix, tmp_path / "one.ab", *flags, threads=1) == 0
    assert unmix(prefix, tmp_path / "four.ab", *flags, threads=4) == 0
    assert (tmp_path / "one.ab").read_bytes() == (tmp_path / "four.ab").read_bytes()


def test_exit_codes(tmp_path):
    big = tmp_path / "big"
    assert simulate(big, m=15, min_angle="0") == 0
    assert unmix(big, tmp_path / "a.ab", "--solver", "oracle") == 6

    assert simulate(tmp_path / "wide", m=5, min_angle="89") == 5

    small = tmp_path / "small"
    other = tmp_path / "other"
    assert simulate(small) == 0
    assert simulate(other, rows=3, cols=3) == 0
    assert unmix(small, tmp_path / "b.ab", "--reference", f"{other}.truth") == 3

    assert main(["--threads", "0", "unmix", "--cube", f"{small}.cube", "--endmembers", f"{small}.endmembers.csv",
                 "--out", str(tmp_path / "c.ab")]) == 2
    assert main(["validate", "--instances", "0"]) == 2
    assert unmix(tmp_path / "missing", tmp_path / "d.ab") == 10


def test_unknown_flag():
    with pytest.raises(SystemExit):
        main(["unmix", "--no-such-flag"])
