"""Speech encoder backends producing frame features at a ~50 Hz rate.

``local-conv`` is a deterministic randomly initialized conv stack with the
same stride layout (total hop 320 samples at 16 kHz) and hidden width
(768) as the pretrained model families this helper is meant to wrap. The
pretrained backends require their weights on disk or a working download
path; in offline environments they raise with instructions instead of
producing wrong features silently.
"""

from __future__ import annotations

import numpy as np
import torch

DEFAULT_DIM = 768
FRAME_RATE_HZ = 50.0

# (out_channels multiplier applied later), kernel, stride per stage: the
# standard 320x downsampling ladder for 16 kHz input.
_CONV_LADDER = [(10, 5), (3, 2), (3, 2), (3, 2), (3, 2), (2, 2), (2, 2)]


class LocalConvEncoder:
    """Deterministic conv feature extractor; a stand-in with real geometry."""

    name = "local-conv"

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        channels = [1, 64, 128, 256, 384, 512, 640, dim]
        layers = []
        for (kernel, stride), c_in, c_out in zip(_CONV_LADDER, channels[:-1], channels[1:]):
            conv = torch.nn.Conv1d(c_in, c_out, kernel, stride=stride, bias=False)
            with torch.no_grad():
                bound = 1.0 / np.sqrt(c_in * kernel)
                conv.weight.uniform_(-bound, bound, generator=gen)
            layers.append(conv)
            layers.append(torch.nn.GELU())
        self.net = torch.nn.Sequential(*layers).eval()

    @property
    def n_layers(self) -> int:
        return len(_CONV_LADDER)

    def extract(self, samples: np.ndarray, sample_rate: int,
                layer: int = -1) -> np.ndarray:
        """(T, dim) float32 features; ``layer`` counts conv stages."""
        if sample_rate != 16000:
            raise ValueError(f"encoder expects 16 kHz input, got {sample_rate}")
        if layer != -1 and not 0 <= layer < self.n_layers:
            raise ValueError(f"layer must be -1 or in [0, {self.n_layers}), got {layer}")
        x = torch.from_numpy(samples.astype(np.float32))[None, None, :]
        stop = self.n_layers if layer == -1 else layer + 1
        with torch.no_grad():
            for stage in range(stop):
                x = self.net[2 * stage + 1](self.net[2 * stage](x))
        out = x[0].T.contiguous().numpy()
        if layer != -1 and out.shape[1] != self.dim:
            # Intermediate stages are narrower; pad so D stays declared.
            padded = np.zeros((out.shape[0], self.dim), dtype=np.float32)
            padded[:, :out.shape[1]] = out
            out = padded
        return out


class PretrainedEncoder:
    """Hidden states from a pretrained speech model via transformers."""

    def __init__(self, name: str, hf_id: str):
        self.name = name
        try:
            from transformers import AutoModel
        except ImportError as exc:
            raise RuntimeError(
                f"encoder {name!r} needs the transformers package; "
                "use --model local-conv or install transformers") from exc
        try:
            self.model = AutoModel.from_pretrained(hf_id).eval()
        except Exception as exc:
            raise RuntimeError(
                f"could not load {hf_id} weights (offline environment or missing "
                "cache); use --model local-conv, or provision the weights and "
                "rerun") from exc
        self.dim = int(self.model.config.hidden_size)

    @property
    def n_layers(self) -> int:
        return int(self.model.config.num_hidden_layers)

    def extract(self, samples: np.ndarray, sample_rate: int,
                layer: int = -1) -> np.ndarray:
        if sample_rate != 16000:
            raise ValueError(f"encoder expects 16 kHz input, got {sample_rate}")
        x = torch.from_numpy(samples.astype(np.float32))[None, :]
        with torch.no_grad():
            out = self.model(x, output_hidden_states=True)
        hidden = out.hidden_states[layer]
        return hidden[0].numpy()


def make_encoder(name: str, seed: int = 0):
    if name == "local-conv":
        return LocalConvEncoder(seed=seed)
    hf_ids = {
        "wav2vec2": "facebook/wav2vec2-base",
        "wavlm": "microsoft/wavlm-base",
        "hubert": "facebook/hubert-base-ls960",
    }
    if name in hf_ids:
        return PretrainedEncoder(name, hf_ids[name])
    raise ValueError(f"unknown encoder {name!r}; choose from "
                     f"{['local-conv', *hf_ids]}")
