"""Feature backbones.

Correspondence features come from a CLIP-style modified ResNet-50 visual
trunk (3-conv stem with blur-free average-pool striding), cut after the
``layer3`` stage.  Metric features come from VGG16 strictly before its
first spatial pooling.  Neither backbone ships weights: state dicts are
loaded from local files, with module naming kept compatible with the
published checkpoints (an optional ``visual.`` prefix is stripped, and
trailing stages that the trunk does not keep are ignored).
"""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

import torch
from torch import nn
from torchvision.models import vgg16


class MissingWeightsError(RuntimeError):
    """No usable pretrained weights were supplied."""


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, inplanes: int, planes: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(inplanes, planes, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.relu1 = nn.ReLU(inplace=True)
        self.conv2 = nn.Conv2d(planes, planes, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.relu2 = nn.ReLU(inplace=True)
        # stride is realized by average pooling, not strided convolution
        self.avgpool = nn.AvgPool2d(stride) if stride > 1 else nn.Identity()
        self.conv3 = nn.Conv2d(planes, planes * self.expansion, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(planes * self.expansion)
        self.relu3 = nn.ReLU(inplace=True)
        self.downsample = None
        if stride > 1 or inplanes != planes * self.expansion:
            # "-1" key keeps parameter names aligned with released checkpoints
            self.downsample = nn.Sequential(
                OrderedDict(
                    [
                        ("-1", nn.AvgPool2d(stride)),
                        (
                            "0",
                            nn.Conv2d(
                                inplanes, planes * self.expansion, 1, bias=False
                            ),
                        ),
                        ("1", nn.BatchNorm2d(planes * self.expansion)),
                    ]
                )
            )

    def forward(self, x):
        identity = x
        out = self.relu1(self.bn1(self.conv1(x)))
        out = self.relu2(self.bn2(self.conv2(out)))
        out = self.avgpool(out)
        out = self.bn3(self.conv3(out))
        if self.downsample is not None:
            identity = self.downsample(x)
        return self.relu3(out + identity)


class CorrespondenceTrunk(nn.Module):
    """Modified ResNet-50 visual trunk kept through ``layer3``.

    The stem downsamples by 4 (strided conv plus average pool), so
    ``layer1`` features sit at 1/4 of the input resolution with 256
    channels and ``layer3`` at 1/16 with 1024 channels.
    """

    def __init__(self, width: int = 64):
        super().__init__()
        self.conv1 = nn.Conv2d(3, width // 2, 3, stride=2, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(width // 2)
        self.relu1 = nn.ReLU(inplace=True)
        self.conv2 = nn.Conv2d(width // 2, width // 2, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(width // 2)
        self.relu2 = nn.ReLU(inplace=True)
        self.conv3 = nn.Conv2d(width // 2, width, 3, padding=1, bias=False)
        self.bn3 = nn.BatchNorm2d(width)
        self.relu3 = nn.ReLU(inplace=True)
        self.avgpool = nn.AvgPool2d(2)
        self._inplanes = width
        self.layer1 = self._make_layer(width, blocks=3)
        self.layer2 = self._make_layer(width * 2, blocks=4, stride=2)
        self.layer3 = self._make_layer(width * 4, blocks=6, stride=2)

    def _make_layer(self, planes: int, blocks: int, stride: int = 1) -> nn.Sequential:
        layers = [Bottleneck(self._inplanes, planes, stride)]
        self._inplanes = planes * Bottleneck.expansion
        layers += [Bottleneck(self._inplanes, planes) for _ in range(blocks - 1)]
        return nn.Sequential(*layers)

    def forward_stages(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return the (layer1, layer3) stage outputs."""
        x = self.relu1(self.bn1(self.conv1(x)))
        x = self.relu2(self.bn2(self.conv2(x)))
        x = self.relu3(self.bn3(self.conv3(x)))
        x = self.avgpool(x)
        f1 = self.layer1(x)
        f3 = self.layer3(self.layer2(f1))
        return f1, f3

    forward = forward_stages


def _load_filtered_state(model: nn.Module, path: str | Path, what: str) -> None:
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise MissingWeightsError(f"{what} weights not found at {path}") from None
    if not isinstance(state, dict):
        raise MissingWeightsError(f"{path}: not a state dict")
    state = {k.removeprefix("visual."): v for k, v in state.items()}
    own = model.state_dict()
    usable = {k: v for k, v in state.items() if k in own}
    missing = set(own) - set(usable)
    if missing:
        raise MissingWeightsError(
            f"{path}: state dict does not cover the {what} trunk "
            f"(missing e.g. {sorted(missing)[0]})"
        )
    model.load_state_dict(usable, strict=False)


def load_correspondence_trunk(
    weights: str | Path | None = None, untrained: bool = False
) -> CorrespondenceTrunk:
    """Build the correspondence trunk in eval mode.

    ``untrained=True`` gives a deterministic seeded random init, meant
    for plumbing tests only; otherwise ``weights`` must point to a local
    state-dict file.
    """
    if untrained:
        torch.manual_seed(0)
        model = CorrespondenceTrunk()
    else:
        if weights is None:
            raise MissingWeightsError(
                "correspondence backbone weights are required; pass a local "
                "state-dict path or use untrained mode for plumbing tests"
            )
        model = CorrespondenceTrunk()
        _load_filtered_state(model, weights, "correspondence")
    return model.eval()


def load_metric_backbone(
    weights: str | Path | None = None, untrained: bool = False
) -> nn.Sequential:
    """VGG16 up to (excluding) the first max-pool: conv-relu-conv-relu."""
    if untrained:
        torch.manual_seed(0)
        full = vgg16(weights=None)
    else:
        if weights is None:
            raise MissingWeightsError(
                "metric backbone weights are required; pass a local "
                "state-dict path or use untrained mode for plumbing tests"
            )
        full = vgg16(weights=None)
        try:
            state = torch.load(weights, map_location="cpu", weights_only=True)
        except FileNotFoundError:
            raise MissingWeightsError(f"metric weights not found at {weights}") from None
        full.load_state_dict(state)
    return nn.Sequential(*list(full.features[:4])).eval()
