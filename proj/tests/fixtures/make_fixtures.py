"""Regenerates the small ONNX models used by the model-backend tests.

    python3 tests/fixtures/make_fixtures.py

Weights are seeded, so the files are stable for a given torch version.
"""
import json
import pathlib

import torch
from torch import nn

HERE = pathlib.Path(__file__).resolve().parent


class TinyGenerator(nn.Module):
    def __init__(self):
        super().__init__()
        self.fc = nn.Linear(100, 3 * 9 * 16)

    def forward(self, z):
        x = self.fc(z).reshape(-1, 3, 9, 16)
        x = nn.functional.interpolate(x, scale_factor=16, mode="nearest")
        return torch.tanh(x)


class WrongShapeGenerator(nn.Module):
    def __init__(self):
        super().__init__()
        self.fc = nn.Linear(100, 3 * 9 * 16)

    def forward(self, z):
        return torch.tanh(self.fc(z).reshape(-1, 3, 9, 16))


class TinyScorer(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(3, 4, kernel_size=3, stride=2)
        self.fc = nn.Linear(4, 10)

    def forward(self, x):
        x = torch.relu(self.conv(x))
        x = x.mean(dim=(2, 3))
        return torch.softmax(self.fc(x), dim=1)


def export(model, example, path, input_name, output_name):
    model.eval()
    torch.onnx.export(model, example, str(path), input_names=[input_name], output_names=[output_name],
                      opset_version=13, dynamo=False)


def main():
    torch.manual_seed(1234)
    export(TinyGenerator(), torch.zeros(1, 100), HERE / "tiny_generator.onnx", "z", "image")
    export(WrongShapeGenerator(), torch.zeros(1, 100), HERE / "wrong_shape_generator.onnx", "z", "image")
    export(TinyScorer(), torch.zeros(1, 3, 32, 32), HERE / "tiny_scorer.onnx", "input", "scores")
    manifest = {
        "input_width": 32,
        "input_height": 32,
        "range": "zero_one",
        "mean": [0.485, 0.456, 0.406],
        "std": [0.229, 0.224, 0.225],
        "channel_order": "rgb",
        "input_name": "input",
        "output_name": "scores",
    }
    (HERE / "tiny_scorer.json").write_text(json.dumps(manifest, indent=2) + "\n")
    write_reference()


def write_reference():
    """Torch-side outputs for a fixed latent, used as the test oracle."""
    torch.manual_seed(1234)
    gen = TinyGenerator().eval()
    WrongShapeGenerator()
    scorer = TinyScorer().eval()
    z = torch.tensor([[((i * 37) % 23 - 11) / 7.0 for i in range(100)]])
    with torch.no_grad():
        image = gen(z)[0]
        # scorer input: the generator output mapped to [0, 1], resized to 32x32
        # bilinearly (half-pixel centers), then normalized per channel.
        x = (image.unsqueeze(0) + 1) / 2
        x = nn.functional.interpolate(x, size=(32, 32), mode="bilinear", align_corners=False)
        mean = torch.tensor([0.485, 0.456, 0.406]).reshape(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).reshape(1, 3, 1, 1)
        probs = scorer((x - mean) / std)[0]
    samples = [[0, 0], [255, 0], [0, 143], [255, 143], [100, 70], [17, 99]]
    ref = {
        "z": z[0].tolist(),
        "pixels": [{"x": px, "y": py, "rgb": [float(image[c, py, px]) for c in range(3)]} for px, py in samples],
        "distribution": probs.tolist(),
        "score": float((probs * torch.arange(1, 11)).sum()),
    }
    (HERE / "reference.json").write_text(json.dumps(ref, indent=2) + "\n")


if __name__ == "__main__":
    main()
