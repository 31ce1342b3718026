"""End-to-end run on a small dataset: two cantilever and two L-shape cases on a 128 x 256 canvas."""

import json
import os

import numpy as np
import pytest

import pistress
from config.runConfig import loadRunConfig
from evaluateModel import evaluate, evaluateLoaded
from func.checkpoint import loadCheckpoint
from func.contourCodec import BACKGROUND
from func.datasetManifest import SplitData, loadSplit, readManifest
from func.fem2d import readFieldText
from func.imageFiles import channelFileName, loadImageTriple
from func.physicsLoss import meanReport
from func.unetModels import build, parameterCount, sampleReports
from generateData import generateDataset
from superResolve import superResolve
from trainModel import fit, runTag, train

SMALL_RUN = {
    "data": {
        "canvasHeight": 128,
        "canvasWidth": 256,
        "baseCaseIds": [
            "cantilever_fixed_conc_y_i3",
            "cantilever_sliding_dist_y_tip",
            "lshape_fixed_conc_x_i2",
            "lshape_sliding_dist_y_tip",
        ],
    },
    "model": {"depth": 2, "baseChannels": 4},
    "train": {"epochs": 2, "batchSize": 8},
}


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    configPath = root / "small.json"
    configPath.write_text(json.dumps(SMALL_RUN))
    with pytest.MonkeyPatch.context() as patch:
        patch.setenv("PISTRESS_THREADS", "2")
        config = loadRunConfig(str(configPath), {"runDir": str(root / "run")})
        manifestPath, header = generateDataset(config)
        manifest = readManifest(manifestPath)
        trained = train(manifest, config, config.seed)
        yield {"config": config, "configPath": str(configPath), "manifest": manifest, "header": header,
               "trained": trained}


class TestGeneratedData:
    def test_split_sizes(self, run):
        assert run["header"].splits == {"train": 24, "test": 8, "validation": 10}
        assert run["header"].canvas == [128, 256]

    def test_augmented_lineages(self, run):
        records = run["manifest"].split("train")
        byBase = {}
        for r in records:
            byBase.setdefault(r.baseCaseId, []).append(r.lineage)
        assert all(sorted(lineages) == sorted(["o", "i", "v", "vi", "h", "hi", "hv", "hvi"])
                   for lineages in byBase.values())

    def test_validation_is_not_augmented(self, run):
        records = run["manifest"].split("validation")
        assert {r.lineage for r in records} == {"o"}
        assert all(r.geometry == "truss" for r in records)
        assert all(r.coarse.startswith("validation") for r in records)

    def test_fem_files(self, run):
        record = run["manifest"].split("test")[0]
        field = readFieldText(run["manifest"].path(record.femFine))
        assert field.mesh.elementCount == {"cantilever": 80 * 40, "lshape": 2000}[record.geometry]
        assert np.all(np.isfinite(field.sigmaX))

    def test_data_check_is_recorded(self, run):
        dataCheck = run["header"].dataCheck
        assert dataCheck["meanPhysicalLossFine"] > 0
        assert dataCheck["meanPhysicalLossFine"] < dataCheck["meanPhysicalLossCoarse"]

    def test_both_geometries_are_generated(self, run):
        records = run["manifest"].records
        assert {r.geometry for r in records} == {"cantilever", "lshape", "truss"}
        assert run["header"].selection.startswith("Named base cases")

    def test_point_forces_are_masked(self, run):
        record = next(r for r in run["manifest"].records
                      if r.baseCaseId == "cantilever_sliding_dist_y_tip" and r.lineage == "o")
        pixels = {tuple(p) for p in record.loadPixels}
        ##sliding pin at mid-height of the root, one coarse element (12.8 px) around it
        assert {(63, 0), (63, 12), (51, 0), (75, 0)} <= pixels

    def test_split_arrays(self, run):
        config = run["config"]
        data = loadSplit(run["manifest"], "test", config.data.epsilon)
        assert data.inputs.shape == (8, 3, 128, 256)
        assert data.inputs.dtype == np.float32
        assert all(mask.count > 0 for mask in data.masks)
        assert np.all((data.targets >= 0) & (data.targets <= 1))


class TestTraining:
    def test_checkpoint_and_history(self, run):
        trained = run["trained"]
        config = run["config"]
        assert len(trained.history) == 2
        assert trained.bestEpoch in (0, 1)
        assert trained.checkpoint == config.path("checkpoints", f"{runTag(config.model, 0)}.psck")
        assert os.path.exists(config.path("tables", "pi-unet_s0_history.json"))
        _, header = loadCheckpoint(trained.checkpoint)
        assert header["canvas"] == [128, 256]

    def test_same_seed_same_history(self, run):
        config = run["config"]
        data = loadSplit(run["manifest"], "train", config.data.epsilon).subset(list(range(4)))
        trainConfig = config.train.model_copy(update={"batchSize": 2})
        histories = [
            [r.train["total"] for r in fit(build(config.model, seed=1), data, None, trainConfig, seed=1).history]
            for _ in range(2)
        ]
        assert histories[0] == histories[1]

    def test_training_reduces_loss(self, run):
        config = run["config"]
        data = loadSplit(run["manifest"], "train", config.data.epsilon).subset(list(range(4)))
        trainConfig = config.train.model_copy(update={"batchSize": 4, "epochs": 15})
        history = fit(build(config.model, seed=2), data, None, trainConfig, seed=2).history
        assert history[-1].train["total"] < history[0].train["total"]


    def test_identity_task(self, run):
        config = run["config"]
        data = loadSplit(run["manifest"], "train", config.data.epsilon)
        crops = np.ascontiguousarray(data.inputs[:, :, 32:64, 96:160])
        identity = SplitData(crops, crops.copy(), [None] * len(crops), data.caseIds)
        modelConfig = config.model.model_copy(update={"physicsInformed": False})
        trainConfig = config.train.model_copy(update={"batchSize": 1, "epochs": 50})
        history = fit(build(modelConfig, seed=3), identity, None, trainConfig, seed=3).history
        assert history[-1].train["mse"] < 1e-3

    def test_physics_term_lowers_physical_loss(self, run):
        config = run["config"]
        data = loadSplit(run["manifest"], "train", config.data.epsilon).subset(list(range(8)))
        trainConfig = config.train.model_copy(update={"batchSize": 4, "epochs": 10})
        physical = {}
        for physicsInformed in (False, True):
            modelConfig = config.model.model_copy(update={"physicsInformed": physicsInformed})
            model = build(modelConfig, seed=5)
            fit(model, data, None, trainConfig, seed=5)
            reports = sampleReports(model, data.inputs, data.targets, data.masks, modelConfig)
            physical[physicsInformed] = meanReport(reports).physical
        assert physical[True] <= physical[False]


class TestEvaluation:
    def test_loss_table(self, run):
        config = run["config"]
        rows, jsonPath = evaluate(run["trained"].checkpoint, config, "validation")
        assert [name for name, _ in rows] == ["Coarse", "PI-UNet"]
        coarse = rows[0][1]
        assert coarse.mse > 0
        assert coarse.total == pytest.approx(coarse.mse + coarse.physical)
        with open(jsonPath) as f:
            table = json.load(f)
        assert table["sampleCount"] == 10
        assert os.path.exists(jsonPath.replace(".json", ".txt"))

    def test_per_sample_reports_average_to_the_table(self, run):
        config = run["config"]
        model, _ = loadCheckpoint(run["trained"].checkpoint)
        data = loadSplit(run["manifest"], "validation", config.data.epsilon)
        rows, perSample = evaluateLoaded(model, data)
        assert len(perSample) == 10
        for key in ("total", "mse", "physical"):
            expected = sum(getattr(r, key) for r in perSample) / len(perSample)
            assert getattr(rows[1][1], key) == pytest.approx(expected, rel=1e-12)

    def test_super_resolve(self, run):
        config = run["config"]
        sidecar = run["manifest"].path(run["manifest"].split("validation")[0].coarse)
        summaries = superResolve(run["trained"].checkpoint, [sidecar], config)
        assert len(summaries) == 1
        assert 0.0 <= summaries[0]["footprintMismatch"]
        assert summaries[0]["flipDiscrepancy"] >= 0.0
        with np.load(summaries[0]["stress"]) as data:
            assert data["stress"].shape == (3, 128, 256)

    def test_super_resolved_background_is_white(self, run):
        config = run["config"]
        sidecar = run["manifest"].path(run["manifest"].split("validation")[1].coarse)
        summary = superResolve(run["trained"].checkpoint, [sidecar], config, measureEquivariance=False)[0]
        output, _ = loadImageTriple(summary["output"])
        assert np.all(output.channels[:, ~output.footprint] == BACKGROUND)
        assert output.isValid()

    def test_super_resolve_channel_files(self, run):
        config = run["config"]
        record = run["manifest"].split("validation")[0]
        folder = os.path.dirname(run["manifest"].path(record.coarse))
        baseId = record.caseId
        argv = ["super-resolve", "--config", run["configPath"], "--run-dir", config.runDir,
                "--checkpoint", run["trained"].checkpoint, "--channels"]
        argv += [os.path.join(folder, channelFileName(baseId, c, "coarse")) for c in ("sx", "sy", "txy")]
        argv += ["--contour-map", str(record.contourMap["C"]), str(record.contourMap["s"])]
        assert pistress.main(argv) == 0

    def test_export_checkpoint_command(self, run, tmp_path, capsys):
        config = run["config"]
        textPath = str(tmp_path / "weights.txt")
        argv = ["export-checkpoint", "--config", run["configPath"], "--run-dir", config.runDir,
                "--checkpoint", run["trained"].checkpoint, "--output", textPath]
        assert pistress.main(argv) == 0
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary["text"] == textPath
        with open(textPath) as f:
            weights = [line for line in f if not line.startswith("#")]
        assert len(weights) == parameterCount(loadCheckpoint(run["trained"].checkpoint)[0])

    def test_eval_command(self, run, capsys):
        config = run["config"]
        argv = ["eval", "--config", run["configPath"], "--run-dir", config.runDir,
                "--checkpoint", run["trained"].checkpoint, "--split", "test"]
        assert pistress.main(argv) == 0
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary["command"] == "eval"
        assert set(summary["rows"]) == {"Coarse", "PI-UNet"}
