import pytest

import generateData
from config.runConfig import loadRunConfig
from func.datasetManifest import baseCases
from func.errors import SolverError
from func.fem2d import buildMeshCantilever, solve

CASE_ID = "cantilever_fixed_dist_y_tip"


@pytest.fixture
def meshes():
    return {"coarse": buildMeshCantilever(100.0, 20.0), "fine": buildMeshCantilever(100.0, 10.0)}


class TestSolveCaseChecks:
    def test_energy_drop_names_the_case(self, monkeypatch, meshes, tmp_path):
        def softenedSolve(mesh, material, load):
            field = solve(mesh, material, load)
            if mesh is meshes["fine"]:
                field.strainEnergy *= 0.5
            return field

        monkeypatch.setattr(generateData, "solve", softenedSolve)
        case = baseCases(caseIds=[CASE_ID])[0]
        config = loadRunConfig(overrides={"runDir": str(tmp_path)})
        with pytest.raises(SolverError, match=CASE_ID):
            generateData.solveCase(case, meshes, config, {}, "train")

    def test_unbalanced_reactions_name_the_case(self, monkeypatch, meshes, tmp_path):
        def leakySolve(mesh, material, load):
            field = solve(mesh, material, load)
            field.reactions = 0.9 * field.reactions
            return field

        monkeypatch.setattr(generateData, "solve", leakySolve)
        case = baseCases(caseIds=[CASE_ID])[0]
        config = loadRunConfig(overrides={"runDir": str(tmp_path)})
        with pytest.raises(SolverError, match=f"{CASE_ID}.*do not balance"):
            generateData.solveCase(case, meshes, config, {}, "train")
