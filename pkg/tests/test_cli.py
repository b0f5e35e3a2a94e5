import numpy as np
import pytest

from conftest import FIXTURE_PREFIX
from trihess.cli import main
from trihess.experiments import StudyConfig, emit_report, run_study
from trihess.fem import Coefficients, FESpace, field_to_csv, solve_dirichlet
from trihess.mesh import load_mesh
from trihess.recovery import extract_stencil


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_study_matches_library(capsys):
    code, out, err = run_cli(
        capsys, "study", "--example", "1", "--pattern", "regular",
        "--levels", "2", "--base-n", "5", "--methods", "ppr-ppr,qf")
    assert code == 0 and err == ""
    cfg = StudyConfig(example="interpolation_study", pattern="regular",
                      levels=2, base_n=5, methods=("ppr_ppr", "qf"))
    assert out == emit_report(run_study(cfg), "csv")


def test_study_markdown_and_fem(capsys, tmp_path):
    target = tmp_path / "report.md"
    code, out, _ = run_cli(
        capsys, "study", "--example", "2", "--pattern", "chevron",
        "--levels", "2", "--base-n", "5", "--format", "markdown",
        "--out", str(target))
    assert code == 0 and out == ""
    cfg = StudyConfig(example="fem_study", pattern="chevron",
                      levels=2, base_n=5)
    assert target.read_text() == emit_report(run_study(cfg), "markdown")


def test_stencil_matches_library(capsys):
    code, out, err = run_cli(
        capsys, "stencil", "--pattern", "chevron", "--n", "10",
        "--component", "hxx", "--at", "0.5", "0.5")
    assert code == 0
    from trihess.mesh import generate_uniform

    chev = generate_uniform("chevron", 10)
    v = int(np.argmin(np.linalg.norm(chev.nodes - [0.5, 0.5], axis=1)))
    stencil = extract_stencil(chev, 1, "ppr_ppr", v, "hxx")
    assert out == stencil.to_json() + "\n"


def test_solve_matches_library(capsys):
    code, out, _ = run_cli(capsys, "solve", "--mesh", FIXTURE_PREFIX,
                           "--solution", "poly2")
    assert code == 0
    from trihess.experiments import SOLUTIONS

    mesh = load_mesh(FIXTURE_PREFIX)
    space = FESpace(mesh, 1)
    sol = SOLUTIONS["poly2"]
    uh = solve_dirichlet(space, Coefficients(f=sol.rhs), g=sol.u)
    assert out == field_to_csv(uh)


def test_mesh_subcommand_writes_loadable_files(tmp_path, capsys):
    prefix = tmp_path / "cc"
    code, _, _ = run_cli(capsys, "mesh", "--pattern", "crisscross", "--n", "10",
                         "--out", str(prefix))
    assert code == 0
    mesh = load_mesh(str(prefix))
    assert mesh.n_nodes == 221
    assert len(mesh.triangles) == 400
    assert mesh.pattern_tag == "imported"  # files carry no pattern metadata


def test_recover_csv_header(capsys):
    code, out, _ = run_cli(capsys, "recover", "--pattern", "regular",
                           "--n", "5", "--source", "interpolant")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "dof_index,x,y,hxx,hxy,hyx,hyy"
    assert len(lines) == 36 + 1


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["study", "--example", "3", "--pattern", "regular"])
    assert exc.value.code == 2


def test_missing_n_with_pattern_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--pattern", "regular"])
    assert exc.value.code == 2


def test_runtime_error_exits_1(capsys):
    code = main(["study", "--example", "1", "--pattern", "regular",
                 "--levels", "1"])
    out = capsys.readouterr()
    assert code == 1
    assert out.err.startswith("error:")


def test_missing_mesh_file_exits_1(capsys, tmp_path):
    code = main(["solve", "--mesh", str(tmp_path / "nope")])
    out = capsys.readouterr()
    assert code == 1
    assert "error:" in out.err
