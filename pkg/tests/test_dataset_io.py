from __future__ import annotations

import json
import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossscale.dataset_io import (
    MODEL_MAGIC,
    REPORT_COLUMNS,
    FormatError,
    export_modes,
    load_image_sets,
    load_model,
    read_image,
    read_pgm,
    rescale_to_bytes,
    save_image_sets,
    save_model,
    to_greyscale,
    write_manifest,
    write_pgm,
    write_projection_csv,
    write_report,
    write_similarity_matrix,
)
from crossscale.evaluation import SeparationReport, SimilarityMatrix, generate_synthetic_classes
from crossscale.learning import ImageSet, SubspaceModel, estimate_subspace
from crossscale.matching import MatchMethod, match, prepare_correction_model
from crossscale.projection import ImageGeometry as G, KernelKind, build_projection

from conftest import planted_set, random_orthonormal


def _report(mu=2.5, **kw):
    base = dict(
        within_confidence=0.1,
        between_confidence=0.25,
        separation=mu,
        method=MatchMethod.CONSTRAINED,
        kernel=KernelKind.BICUBIC,
        low_geometry=G(5, 5),
        high_geometry=G(50, 50),
        noise_sigma=0.0,
        seed=3,
    )
    base.update(kw)
    return SeparationReport(**base)


# -- images -----------------------------------------------------------------


def test_pgm_roundtrip_and_constant(tmp_path):
    write_pgm(tmp_path / "a.pgm", np.full((50, 50), 128))
    img = read_image(tmp_path / "a.pgm")
    assert img.ravel().shape == (2500,) and np.all(img == 128)
    rng = np.random.default_rng(0)
    pix = rng.integers(0, 256, (7, 9))
    write_pgm(tmp_path / "b.pgm", pix)
    once = read_pgm(tmp_path / "b.pgm")
    assert np.array_equal(once, pix)
    write_pgm(tmp_path / "c.pgm", once)
    assert (tmp_path / "b.pgm").read_bytes() == (tmp_path / "c.pgm").read_bytes()


def test_ascii_pgm_with_comment(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P2\n# made by hand\n3 2\n255\n0 1 2\n3 4 255\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), [[0, 1, 2], [3, 4, 255]])


def test_png_roundtrip_and_colour(tmp_path):
    Image = pytest.importorskip("PIL.Image")
    pix = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    Image.fromarray(pix, mode="L").save(tmp_path / "g.png")
    assert np.array_equal(read_image(tmp_path / "g.png"), pix)
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[..., 0], rgb[..., 1], rgb[..., 2] = 100, 200, 50
    Image.fromarray(rgb, mode="RGB").save(tmp_path / "c.png")
    np.testing.assert_allclose(read_image(tmp_path / "c.png"), 0.299 * 100 + 0.587 * 200 + 0.114 * 50)


def test_greyscale_weights():
    rgb = np.array([[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]])
    np.testing.assert_allclose(to_greyscale(rgb), [[0.299, 0.587, 0.114]])


def test_unsupported_format(tmp_path):
    (tmp_path / "x.bmp").write_bytes(b"BM")
    with pytest.raises(FormatError):
        read_image(tmp_path / "x.bmp")
    (tmp_path / "y.pgm").write_bytes(b"P6\n1 1\n255\n...")
    with pytest.raises(FormatError):
        read_image(tmp_path / "y.pgm")


# -- manifests ----------------------------------------------------------------


def _dataset(tmp_path, geometry=G(50, 50)):
    entries = []
    for c in ("a", "b"):
        (tmp_path / c).mkdir()
        names = []
        for i in range(3):
            write_pgm(tmp_path / c / f"{i}.pgm", np.full(geometry.shape, 10 * i + (c == "b")))
            names.append(f"{c}/{i}.pgm")
        entries.append({"class": c, "condition": 0, "images": names})
    write_manifest(tmp_path / "manifest.json", geometry, entries)
    return tmp_path / "manifest.json"


def test_load_manifest_structure(tmp_path):
    sets = load_image_sets(_dataset(tmp_path))
    assert len(sets) == 2
    assert all(s.n_samples == 3 and s.geometry.pixels == 2500 for s in sets)
    assert [s.class_label for s in sets] == ["a", "b"]
    assert np.all(sets[1].samples[2] == 21)


def test_manifest_errors(tmp_path):
    m = _dataset(tmp_path)
    write_pgm(tmp_path / "a" / "1.pgm", np.zeros((40, 50)))
    with pytest.raises(FormatError, match="1.pgm"):
        load_image_sets(m)
    (tmp_path / "a" / "1.pgm").unlink()
    with pytest.raises(FileNotFoundError, match="1.pgm"):
        load_image_sets(m)
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(FormatError):
        load_image_sets(tmp_path / "bad.json")
    (tmp_path / "other.json").write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(FormatError):
        load_image_sets(tmp_path / "other.json")


def test_save_image_sets_roundtrip(tmp_path):
    sets = generate_synthetic_classes(2, 6, G(8, 8), 2, seed=1)
    manifest = save_image_sets(sets, tmp_path / "d", provenance={"seed": 1})
    back = load_image_sets(manifest)
    assert len(back) == 4
    for a, b in zip(sets, back):
        assert (a.class_label, a.condition_label) == (b.class_label, b.condition_label)
        assert np.abs(a.samples - b.samples).max() <= 0.5
    assert json.loads(manifest.read_text())["provenance"] == {"seed": 1}


# -- models -------------------------------------------------------------------


def _some_model(seed=0, geometry=G(6, 5), dim=3):
    rng = np.random.default_rng(seed)
    m = estimate_subspace(planted_set(rng, geometry, dim, label="c07"), dim)
    m.provenance.update(kernel="bicubic", note="test")
    return m


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_model_roundtrip_bitwise(tmp_path_factory, seed, dim):
    path = tmp_path_factory.mktemp("m") / "x.model"
    m = _some_model(seed, dim=dim)
    save_model(m, path)
    back = load_model(path)
    assert back.geometry == m.geometry
    assert back.mean.tobytes() == m.mean.tobytes()
    assert back.basis.tobytes() == m.basis.tobytes()
    assert back.energy_captured == m.energy_captured
    assert back.class_label == "c07" and back.provenance["kernel"] == "bicubic"


def test_model_file_layout_and_checksum_stability(tmp_path):
    m = _some_model(4)
    save_model(m, tmp_path / "a.model")
    save_model(_some_model(4), tmp_path / "b.model")
    data = (tmp_path / "a.model").read_bytes()
    assert data == (tmp_path / "b.model").read_bytes()
    assert data[:8] == MODEL_MAGIC
    d, D = 30, 3
    assert len(data) == 8 + 4 * 5 + 8 + 8 * (d + d * D) + 4
    assert int.from_bytes(data[-4:], "little") == zlib.crc32(data[:-4])


def test_model_errors(tmp_path):
    save_model(_some_model(), tmp_path / "a.model")
    data = bytearray((tmp_path / "a.model").read_bytes())

    def attempt(blob):
        (tmp_path / "b.model").write_bytes(bytes(blob))
        with pytest.raises(FormatError) as info:
            load_model(tmp_path / "b.model")
        return str(info.value)

    bad = bytearray(data)
    bad[0] = ord("Z")
    assert "magic" in attempt(bad)
    bad = bytearray(data)
    bad[8] = 9
    assert "version" in attempt(bad)
    assert "truncated" in attempt(data[:-10])
    assert "truncated" in attempt(data[:12])
    bad = bytearray(data)
    bad[60] ^= 0xFF
    assert "checksum" in attempt(bad)


# -- mode export --------------------------------------------------------------


def test_rescale_guard_and_range():
    np.testing.assert_array_equal(rescale_to_bytes(np.full(9, 3.0)), np.full(9, 127.5))
    r = rescale_to_bytes(np.array([-2.0, 0.0, 2.0]))
    np.testing.assert_allclose(r, [0, 127.5, 255])


def _result_with_modes(modes):
    from crossscale.matching import MatchResult

    return MatchResult(1.0, np.ones(1), np.zeros((modes[0][0].size, 1)), MatchMethod.NAIVE, mode_pairs=modes)


def test_export_single_pixel_mode(tmp_path):
    e1 = np.zeros(25)
    e1[0] = 1.0
    files = export_modes(_result_with_modes([(e1, np.full(25, 2.0))]), None, None, G(5, 5), tmp_path / "m", add_mean=False)
    assert [f.name for f in files] == ["m_mode0_reference.pgm", "m_mode0_reconstructed.pgm"]
    ref, rec = read_pgm(files[0]), read_pgm(files[1])
    assert ref[0, 0] == 255 and ref.sum() == 255
    assert np.all(rec == 128)  # 127.5 rounds half to even
    with pytest.raises(ValueError):
        export_modes(_result_with_modes([(e1, e1)]), None, None, G(4, 4), tmp_path / "n")


def test_export_planted_modes_correlate(tmp_path):
    rng = np.random.default_rng(1)
    hi, lo = G(20, 20), G(5, 5)
    P = build_projection(hi, lo, "bilinear")
    s = planted_set(rng, hi, 3, n=20)
    m_hi = estimate_subspace(s, 3)
    m_lo = estimate_subspace(ImageSet(lo, s.samples @ P.entries.T), 3)
    res = match(m_lo, m_hi)
    cm = prepare_correction_model(P)
    files = export_modes(res, m_hi.mean, cm.reverse @ m_lo.mean, hi, tmp_path / "p", add_mean=False)
    assert len(files) == 6
    for ref, rec in zip(files[::2], files[1::2]):
        a, b = read_pgm(ref).ravel(), read_pgm(rec).ravel()
        assert np.corrcoef(a, b)[0, 1] > 0.9
    # with the means added the images are still written at full range
    with_mean = export_modes(res, m_hi.mean, cm.reverse @ m_lo.mean, hi, tmp_path / "q", count=1)
    img = read_pgm(with_mean[0])
    assert img.min() == 0 and img.max() == 255


# -- reports --------------------------------------------------------------


def test_report_csv(tmp_path):
    write_report([_report()], "csv", tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert lines[1] == "constrained,bicubic,5x5,50x50,0,0.1,0.25,2.5,3"
    assert len(lines) == 2


def test_report_float_precision(tmp_path):
    write_report([_report(mu=1 / 3)], "csv", tmp_path / "r.csv")
    assert "0.333333333333," in (tmp_path / "r.csv").read_text()


def test_report_infinity(tmp_path):
    write_report([_report(mu=math.inf)], "csv", tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[1].split(",")[7] == "inf"
    write_report([_report(mu=math.inf), _report()], "json", tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["schema_version"] == 1
    assert doc["reports"][0]["mu"] is None and doc["reports"][0]["mu_infinite"] is True
    assert doc["reports"][1]["mu"] == 2.5 and doc["reports"][1]["mu_infinite"] is False
    assert list(doc["reports"][1])[: len(REPORT_COLUMNS)] == list(REPORT_COLUMNS)


def test_report_determinism_and_errors(tmp_path):
    for name in ("a", "b"):
        write_report([_report(), _report(mu=7.0)], "json", tmp_path / f"{name}.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    with pytest.raises(ValueError):
        write_report([], "csv", tmp_path / "c.csv")
    with pytest.raises(ValueError):
        write_report([_report()], "xml", tmp_path / "c.xml")


def test_matrix_csvs(tmp_path):
    sm = SimilarityMatrix(np.array([[1.0, 0.25], [0.5, 1.0]]), ["a", "b"], ["a", "b"])
    write_similarity_matrix(sm, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines() == ["gallery\\probe,a,b", "a,1,0.25", "b,0.5,1"]
    P = build_projection(G(2, 2), G(1, 1), "bilinear")
    write_projection_csv(P, tmp_path / "p.csv")
    assert np.array_equal(np.loadtxt(tmp_path / "p.csv", delimiter=",", ndmin=2), P.entries)
