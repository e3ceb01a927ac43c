import dataclasses

import pytest

from corpus import natural_crops
from distortion_triage.defilters import denoise, restore
from distortion_triage.errors import ConfigError, FormatError
from distortion_triage.gbdt import save_model
from distortion_triage.image_core import load_image, save_image
from distortion_triage.pipeline import (
    PipelineConfig,
    ProvenanceRecord,
    list_images,
    process_batch,
    process_image,
    read_provenance,
    write_provenance,
)
from distortion_triage.synth import DistortionClass, DistortionKind, DistortionSpec, apply_distortion


@pytest.fixture(scope="module")
def image_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("images")
    for k, img in enumerate(natural_crops(5, size=64, seed=8, split="test")):
        save_image(img, d / f"img{k}.png")
    return d


def strip_time(record):
    return dataclasses.replace(record, wall_time_ms=0.0)


def test_config_validation(model_file, tmp_path):
    with pytest.raises(ConfigError):
        PipelineConfig(model_path=tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        PipelineConfig(model_path=model_file, workers=0)
    with pytest.raises(ConfigError):
        PipelineConfig(defilter_params={"denoise": 3})


def test_single_model_file_rejected(small_ensemble, tmp_path):
    save_model(small_ensemble.models[0], tmp_path / "one.json")
    with pytest.raises(ConfigError):
        PipelineConfig(model_path=tmp_path / "one.json").load_ensemble()


def test_process_image_routes_and_records(small_ensemble, tmp_path):
    img = natural_crops(1, size=64, seed=1, split="test")[0]
    noisy = apply_distortion(img, DistortionSpec(DistortionKind.NOISE, 3, 2))
    config = PipelineConfig(output_dir=tmp_path)
    restored, record = process_image(noisy, small_ensemble, config, "noisy.png")
    cls = DistortionClass(record.predicted_class)
    assert restored == restore(noisy, cls)
    assert record.predicted_class == record.recomputed_class()
    assert len(record.per_model_votes) == 3 and len(record.per_model_winning_probabilities) == 3
    assert load_image(record.output_path) == restored
    if cls is DistortionClass.NOISE:
        assert restored == denoise(noisy)
    again, record2 = process_image(noisy, small_ensemble, config, "noisy.png")
    assert again == restored and strip_time(record2) == strip_time(record)


def test_batch_isolates_failures_and_keeps_order(small_ensemble, image_dir, tmp_path):
    paths = list_images(image_dir)
    bad = tmp_path / "broken.ppm"
    bad.write_bytes(b"P6\n4 4\n255\n\x00")
    mixed = paths[:2] + [bad] + paths[2:]
    for workers in (1, 3):
        config = PipelineConfig(output_dir=tmp_path / f"out{workers}", workers=workers)
        result = process_batch(mixed, small_ensemble, config)
        assert [r.input_path for r in result.records] == [str(p) for p in mixed]
        assert result.error_count == 1 and not result.records[2].ok
        assert "FormatError" in result.records[2].error
        assert sum(result.class_counts().values()) == len(paths)


def test_batch_independent_of_worker_count(small_ensemble, image_dir, tmp_path):
    paths = list_images(image_dir)
    runs = []
    for workers in (1, 4):
        out = tmp_path / f"w{workers}"
        result = process_batch(paths, small_ensemble, PipelineConfig(output_dir=out, workers=workers))
        runs.append(([strip_time(dataclasses.replace(r, output_path=None)) for r in result.records],
                     [(out / p.name).read_bytes() for p in paths]))
    assert runs[0] == runs[1]


def test_empty_batch(small_ensemble):
    result = process_batch([], small_ensemble, PipelineConfig())
    assert result.records == [] and result.error_count == 0


def test_provenance_roundtrip(small_ensemble, image_dir, tmp_path):
    result = process_batch(list_images(image_dir), small_ensemble, PipelineConfig(), apply_defilter=False)
    write_provenance(tmp_path / "p.jsonl", result.records)
    back = read_provenance(tmp_path / "p.jsonl")
    assert back == result.records
    for r in back:
        assert r.predicted_class == r.recomputed_class()
        assert r.output_path is None
    text = (tmp_path / "p.jsonl").read_text().splitlines()[0]
    for name in ("input_path", "predicted_class", "per_model_votes", "per_model_winning_probabilities",
                 "defilter", "output_path", "wall_time_ms"):
        assert f'"{name}"' in text


def test_provenance_bad_line(tmp_path):
    good = ProvenanceRecord("a.png", 1, [1, 1, 2], [0.5, 0.6, 0.7], "denoise").to_json()
    (tmp_path / "p.jsonl").write_text(good + "\n{\"nope\": 1}\n")
    with pytest.raises(FormatError, match=":2:"):
        read_provenance(tmp_path / "p.jsonl")


def test_list_images(tmp_path):
    (tmp_path / "b.png").write_bytes(b"")
    (tmp_path / "a.PGM").write_bytes(b"")
    (tmp_path / "notes.txt").write_text("x")
    assert [p.name for p in list_images(tmp_path)] == ["a.PGM", "b.png"]
    with pytest.raises(ConfigError):
        list_images(tmp_path / "absent")
