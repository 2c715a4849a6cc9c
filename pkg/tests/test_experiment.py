import numpy as np

from mem2mem.experiment import desk_config, run_variant
from mem2mem.text import make_synthetic_corpus


def test_run_variant_smoke():
    train_docs, _ = make_synthetic_corpus(11, 8)
    test_docs, _ = make_synthetic_corpus(12, 3)
    r = run_variant(desk_config("full", epochs=1, max_decode_len=6), train_docs, test_docs, beam=2)
    assert 0.0 <= r.rouge1 <= 1.0 and 0.0 <= r.extraction_recall <= 1.0
    assert 0.0 <= r.mean_offdiag <= r.max_offdiag <= 1.0
    assert len(r.losses) == 1 and np.isfinite(r.losses[0])


def test_baseline_has_no_memory_metrics():
    train_docs, _ = make_synthetic_corpus(11, 4)
    r = run_variant(desk_config("baseline", epochs=1, max_decode_len=4), train_docs, train_docs[:2], beam=1)
    assert r.extraction_recall is None and r.max_offdiag is None
