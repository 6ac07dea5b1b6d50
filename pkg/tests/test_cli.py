import os
import subprocess
import sys

import pytest

from surffpt.cli import build_parser, main


def run(args, cwd, threads=1):
    env = dict(os.environ, NUMBA_NUM_THREADS=str(threads), OMP_NUM_THREADS=str(threads),
               OPENBLAS_NUM_THREADS=str(threads), PYTHONHASHSEED=str(threads))
    return subprocess.run([sys.executable, "-m", "surffpt.cli", *args], cwd=cwd, env=env,
                          capture_output=True, text=True, check=True)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    run(["sample", "--surface", "flat_disk:1.0", "--h", "0.1", "--boundary", "edge::1e-9", "--seed", "3",
         "--out", "disk.txt"], d)
    run(["sample", "--surface", "D", "--h", "0.1", "--out", "torus.txt"], d)
    return d


def test_sample_writes_a_cloud(workdir):
    text = (workdir / "disk.txt").read_text()
    header = text.splitlines()[0]
    assert header.startswith("# n=") and "surface=flat_disk:1.0" in header and "boundary=edge" in header
    assert text.count("boundary\n") > 0


def test_solve_fpt_output(workdir):
    out = run(["solve-fpt", "--cloud", "disk.txt", "--degree", "2"], workdir)
    lines = out.stdout.splitlines()
    assert lines[0] == "index,x,y,z,u"
    assert "residual=" in out.stderr
    centre = min(lines[1:], key=lambda ln: sum(float(v) ** 2 for v in ln.split(",")[1:3]))
    assert float(centre.split(",")[4]) == pytest.approx(0.25, abs=0.01)


COMMANDS = {
    "sample": ["sample", "--surface", "sliced_torus", "--h", "0.1", "--seed", "5", "--boundary", "edge::1e-9",
               "--out", "{out}"],
    "curvature": ["curvature", "--cloud", "torus.txt", "--out", "{out}"],
    "solve-fpt": ["solve-fpt", "--cloud", "disk.txt", "--spec", "constant:a=0.5;0;0,s=1.2", "--out", "{out}"],
    "mc-validate": ["mc-validate", "--cloud", "disk.txt", "--points", "10,40", "--traj", "300", "--dt", "1e-3",
                    "--seed", "7", "--out", "{out}"],
    "converge": ["converge", "--manifold", "D", "--degrees", "2", "--levels", "2", "--out", "{out}"],
    "study": ["study", "--name", "diffusivity-depth", "--config", "study.yaml", "--out", "{out}"],
}


@pytest.mark.parametrize("name", list(COMMANDS))
def test_outputs_are_byte_identical_across_runs_and_threads(workdir, name):
    (workdir / "study.yaml").write_text("values: [0.0, 0.9]\nh: 0.1\n")
    outs = []
    for k, threads in enumerate((1, 4)):
        path = workdir / f"{name}-{k}.out"
        run([a.format(out=path.name) for a in COMMANDS[name]], workdir, threads)
        outs.append(path.read_bytes())
    assert outs[0] and outs[0] == outs[1]


def test_mc_validate_report(workdir):
    run([a.format(out="mc.out") for a in COMMANDS["mc-validate"]], workdir)
    text = (workdir / "mc.out").read_text()
    assert text.startswith("index,u_pde,u_mc,stderr,z\n")
    assert "# within_3se=" in text


def test_parser_rejects_unknown_study():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["study", "--name", "quadruple-well"])


def test_missing_surface_header(tmp_path):
    p = tmp_path / "bare.txt"
    p.write_text("# n=1\n0.0,0.0,0.0,boundary\n")
    with pytest.raises(SystemExit):
        main(["mc-validate", "--cloud", str(p), "--points", "0"])


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert capsys.readouterr().out.strip() == "0.1.0"
