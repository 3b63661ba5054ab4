"""Ingest pre-committed exporter-produced files through the primary reader.

The exporter lives in a separate package; these fixtures were generated
once with its mock model (seed 42, dim 16) and committed, so this suite
never needs the exporter built.
"""

import os

import numpy as np

from tara.embeddings import sim_matrix
from tara.embfile import read_embeddings

from conftest import DATA_DIR


def test_text_export_ingests():
    m = read_embeddings(
        os.path.join(DATA_DIR, "exporter_text.emb"),
        os.path.join(DATA_DIR, "exporter_text.manifest.jsonl"),
    )
    assert m.rows == 3 and m.dim == 16
    assert m.normalized is True
    assert m.ids == (
        "The person opens the box 00.",
        "The person closes the box 00.",
        "A dog is swimming.",
    )
    norms = np.linalg.norm(m.data.astype(np.float64), axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-5)


def test_video_export_ingests_and_composes_with_text():
    videos = read_embeddings(
        os.path.join(DATA_DIR, "exporter_video.emb"),
        os.path.join(DATA_DIR, "exporter_video.manifest.jsonl"),
    )
    texts = read_embeddings(
        os.path.join(DATA_DIR, "exporter_text.emb"),
        os.path.join(DATA_DIR, "exporter_text.manifest.jsonl"),
    )
    assert videos.ids == ("clip-a", "clip-b")
    assert videos.normalized and videos.dim == texts.dim
    sims = sim_matrix(videos, texts)
    assert sims.shape == (2, 3)
    assert np.all(np.abs(sims) <= 1 + 1e-5)
