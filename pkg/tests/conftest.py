import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

TINY = {
    "corpus": {
        "format": "synthetic",
        "label_ratio": 0.2,
        "min_count": 0,
        "synthetic": {"classes": 2, "docs_per_class": 15, "vocab_per_class": 10,
                      "shared_vocab": 10, "doc_length": 12, "seed": 3},
    },
    "embed": {"dim": 4, "epochs": 20},
    "graph": {"u": 2},
    "model": {"d_ms": 4, "max_epochs": 60, "patience": 20},
}


@pytest.fixture
def tiny(tmp_path):
    """A config dict that runs the whole pipeline in well under a second."""
    import copy
    d = copy.deepcopy(TINY)
    d["run"] = {"out": str(tmp_path / "run")}
    return d
