"""Start the annotation service on a fixture corpus for UI e2e tests.

Builds (once, cached) a tiny phantom corpus plus a small checkpoint under
.e2e-fixture/, then serves on a free port, printing "READY <url>" when
the service is up.
"""

import socket
import sys
from pathlib import Path

import torch

FIXTURE = Path(__file__).resolve().parent.parent / ".e2e-fixture"


def ensure_fixture():
    from ugda.phantom import CorpusConfig, build_corpus, load_manifest
    from ugda.trainer import TrainConfig, pretrain_source

    corpus_dir = FIXTURE / "corpus"
    ckpt = FIXTURE / "run" / "checkpoint_best.pt"
    if not (corpus_dir / "manifest.json").exists():
        build_corpus(
            CorpusConfig(
                out_dir=str(corpus_dir), source_count=3, target_count=3, eval_count=1,
                ps_fraction=1.0, seed=21, shape=(16, 16, 16), spacing_mm=(1.0, 1.0, 1.0),
                source_overrides=dict(radius_frac=(0.32, 0.42)),
                target_overrides=dict(radius_frac=(0.32, 0.42), deform_amplitude=0.15),
            )
        )
    if not ckpt.exists():
        torch.set_num_threads(2)
        manifest = load_manifest(corpus_dir / "manifest.json")
        config = TrainConfig(
            variant="supervised_dual", max_epochs=2, seed=0, input_shape=(16, 16, 16),
            stage_channels=(4, 8), blocks_per_stage=(1, 1), norm_groups=2,
            disc_base_channels=4, disc_dilations=(2,), sigma_vox=2.0,
        )
        pretrain_source(manifest, config, ckpt.parent)
    return corpus_dir, ckpt


def main():
    corpus_dir, ckpt = ensure_fixture()
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]

    import uvicorn

    from ugda.service import create_app

    app = create_app(corpus_dir, ckpt=ckpt)
    print(f"READY http://127.0.0.1:{port}", flush=True)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="error")


if __name__ == "__main__":
    sys.exit(main())
