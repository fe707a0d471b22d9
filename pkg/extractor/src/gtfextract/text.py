"""Contextual token and sentence representations.

The ``charlstm`` model is a self-contained character-level encoder: a
byte embedding followed by two bidirectional recurrent layers. Every
token gets three stacked representations (embedding average, first
layer output, second layer output), all of width ``2 * hidden``; the
sentence gets one row per recurrent layer, the concatenated final
states of both directions. Construction is seeded, so runs with the
same seed and inputs produce identical tensors; a parameter file can be
supplied instead to pin the weights outright.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

WORD_LAYERS = 3
SENTENCE_LAYERS = 2


class CharRecurrentEncoder(nn.Module):
    def __init__(self, hidden: int = 32):
        super().__init__()
        self.hidden = hidden
        self.width = 2 * hidden
        self.embed = nn.Embedding(256, self.width)
        self.layer1 = nn.LSTM(self.width, hidden, bidirectional=True, batch_first=True)
        self.layer2 = nn.LSTM(self.width, hidden, bidirectional=True, batch_first=True)

    @torch.no_grad()
    def encode(self, tokens: list[str]) -> tuple[list[np.ndarray], np.ndarray]:
        """Per-token ``[3, width]`` stacks and the ``[2, width]`` sentence
        matrix, as float32 arrays."""
        if not tokens:
            raise ValueError("caption has no tokens")
        base_rows = []
        for token in tokens:
            codes = torch.tensor(list(token.encode("utf-8")), dtype=torch.long)
            base_rows.append(self.embed(codes).mean(dim=0))
        base = torch.stack(base_rows).unsqueeze(0)  # [1, T, width]

        out1, (h1, _) = self.layer1(base)
        out2, (h2, _) = self.layer2(out1)

        words = []
        for t in range(len(tokens)):
            stack = torch.stack([base[0, t], out1[0, t], out2[0, t]])
            words.append(stack.numpy().astype(np.float32, copy=True))
        sentence = torch.stack(
            [torch.cat([h1[0, 0], h1[1, 0]]), torch.cat([h2[0, 0], h2[1, 0]])]
        )
        return words, sentence.numpy().astype(np.float32, copy=True)


def build_text_encoder(hidden: int, seed: int, weights_path: str = "") -> CharRecurrentEncoder:
    torch.manual_seed(seed)
    encoder = CharRecurrentEncoder(hidden)
    if weights_path:
        encoder.load_state_dict(torch.load(weights_path, map_location="cpu", weights_only=True))
    encoder.eval()
    return encoder
