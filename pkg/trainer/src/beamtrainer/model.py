"""Two-branch beam predictor: conv pipeline over the codebook stack and a
vector pipeline over the 2M normalized first-layer powers, exchanging
features twice, with three linear heads (tx codeword, rx codeword, power).

The inference-time topology (what export writes and the runtime executes)
is this module's forward pass with batch norm folded into the adjacent
conv/linear weights and dropout removed.
"""

from __future__ import annotations

import torch
from torch import nn

BLOCK_WIDTHS = (32, 64, 128)
VEC_WIDTH = 64


class ConvBn(nn.Module):
    """Conv2d + BatchNorm2d, the foldable unit of the conv pipeline."""

    def __init__(self, in_c, out_c, kernel, stride=1, depthwise=False):
        super().__init__()
        kh, kw = kernel
        self.conv = nn.Conv2d(
            in_c,
            out_c,
            kernel,
            stride=stride,
            padding=(kh // 2, kw // 2),
            groups=in_c if depthwise else 1,
        )
        self.bn = nn.BatchNorm2d(out_c)

    def forward(self, x):
        return self.bn(self.conv(x))


class LinearBn(nn.Module):
    def __init__(self, in_f, out_f):
        super().__init__()
        self.fc = nn.Linear(in_f, out_f)
        self.bn = nn.BatchNorm1d(out_f)

    def forward(self, x):
        return self.bn(self.fc(x))


class MultiScaleResidualBlock(nn.Module):
    """Four parallel kernels (1x1, 1x3, 3x1, 3x3) concatenated, then a 3x3
    residual unit over the concatenation and a 2x2 max pool (when the map
    is still large enough to pool)."""

    def __init__(self, in_c, out_c, pool: bool):
        super().__init__()
        branch_c = out_c // 4
        self.k1x1 = ConvBn(in_c, branch_c, (1, 1))
        self.k1x3 = ConvBn(in_c, branch_c, (1, 3))
        self.k3x1 = ConvBn(in_c, branch_c, (3, 1))
        self.k3x3 = ConvBn(in_c, branch_c, (3, 3))
        self.res = ConvBn(out_c, out_c, (3, 3))
        self.pool = nn.MaxPool2d(2) if pool else nn.Identity()

    def forward(self, x):
        cat = torch.cat(
            [
                torch.relu(self.k1x1(x)),
                torch.relu(self.k1x3(x)),
                torch.relu(self.k3x1(x)),
                torch.relu(self.k3x3(x)),
            ],
            dim=1,
        )
        return self.pool(torch.relu(self.res(cat) + cat))


class FusionExchange(nn.Module):
    """Bidirectional exchange: the conv map takes the vector state as a
    per-channel broadcast, the vector state takes back the global average
    of the refreshed map. The second exchange downsamples with a strided
    depthwise conv."""

    def __init__(self, channels: int, second: bool):
        super().__init__()
        if second:
            self.fuse = nn.Sequential(
                ConvBn(channels, channels, (3, 3)),
                nn.ReLU(),
                ConvBn(channels, channels, (3, 3), stride=2, depthwise=True),
            )
        else:
            self.fuse = ConvBn(channels, channels, (1, 1))
        self.v2c = nn.Linear(VEC_WIDTH, channels)
        self.c2v = nn.Linear(channels, VEC_WIDTH)

    def forward(self, conv_map, vec_state):
        t = self.fuse(conv_map)
        conv_out = torch.relu(t + self.v2c(vec_state)[:, :, None, None])
        pooled = conv_out.mean(dim=(2, 3))
        vec_out = torch.relu(vec_state + self.c2v(pooled))
        return conv_out, vec_out


class BeamPredictor(nn.Module):
    def __init__(self, n_antennas: int, branching: int, dropout: float = 0.5):
        super().__init__()
        if n_antennas < 2:
            raise ValueError(f"need n_antennas >= 2, got {n_antennas}")
        c1, c2, c3 = BLOCK_WIDTHS
        self.n_antennas = n_antennas
        self.branching = branching

        h = n_antennas
        self.block1 = MultiScaleResidualBlock(4, c1, pool=h >= 2)
        h = h // 2 if h >= 2 else h
        self.fusion1 = FusionExchange(c1, second=False)
        self.block2 = MultiScaleResidualBlock(c1, c2, pool=h >= 2)
        h = h // 2 if h >= 2 else h
        self.fusion2 = FusionExchange(c2, second=True)
        h = (h - 1) // 2 + 1
        self.block3 = MultiScaleResidualBlock(c2, c3, pool=h >= 2)

        self.vec1 = LinearBn(2 * branching, VEC_WIDTH)
        self.vec2 = LinearBn(VEC_WIDTH, VEC_WIDTH)
        self.vec3 = LinearBn(VEC_WIDTH, VEC_WIDTH)
        self.vec4 = LinearBn(VEC_WIDTH, VEC_WIDTH)

        feat = c3 + VEC_WIDTH
        self.dropout = nn.Dropout(dropout)
        self.tx_head = nn.Linear(feat, 2 * n_antennas)
        self.rx_head = nn.Linear(feat, 2 * n_antennas)
        self.pow_head = nn.Linear(feat, 1)

    def forward(self, conv_in, vec_in):
        v = torch.relu(self.vec1(vec_in))
        v = torch.relu(self.vec2(v))
        c = self.block1(conv_in)
        c, v = self.fusion1(c, v)
        v = torch.relu(self.vec3(v))
        c = self.block2(c)
        c, v = self.fusion2(c, v)
        v = torch.relu(self.vec4(v))
        c = self.block3(c)
        feat = torch.cat([c.mean(dim=(2, 3)), v], dim=1)
        feat = self.dropout(feat)
        return self.tx_head(feat), self.rx_head(feat), self.pow_head(feat)


def build_model(n_antennas: int, branching: int, seed: int, dropout: float = 0.5) -> BeamPredictor:
    """Seeded construction: two builds with one seed share initial weights."""
    torch.manual_seed(seed)
    return BeamPredictor(n_antennas, branching, dropout=dropout)
