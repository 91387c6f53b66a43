#!/usr/bin/env python3
"""Model worker for the `scm` process adapter.

Serves FastSAM (feature pyramid and segment masks) and CLIP (image and text
embeddings) over the JSON-lines protocol documented in
`crates/scm/src/process.rs`.

Expected layout of the weights directory:

    <weights>/FastSAM-x.pt            FastSAM checkpoint (ultralytics)
    <weights>/clip-vit-base-patch32/  CLIP model directory (transformers)

Both names can be overridden with --fastsam and --clip.
"""

import argparse
import base64
import json
import sys
from pathlib import Path

import numpy as np
import torch

# backbone layers whose outputs form the stride 8 / 16 / 32 pyramid
PYRAMID_LAYERS = (4, 6, 9)
STRIDES = (8, 16, 32)


def decode_image(obj):
    raw = base64.b64decode(obj["rgb"])
    return np.frombuffer(raw, dtype=np.uint8).reshape(obj["height"], obj["width"], 3)


def encode_level(arr):
    c, h, w = arr.shape
    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return {"height": h, "width": w, "channels": c, "data": base64.b64encode(data).decode()}


def pack_mask(mask):
    return base64.b64encode(np.packbits(mask.astype(np.uint8).ravel(), bitorder="big").tobytes()).decode()


class Models:
    def __init__(self, weights, device, fastsam_name, clip_name, imgsz, conf, iou):
        from transformers import CLIPModel, CLIPProcessor
        from ultralytics import FastSAM

        self.device = device
        self.imgsz, self.conf, self.iou = imgsz, conf, iou
        self.sam = FastSAM(str(Path(weights) / fastsam_name))
        self.net = self.sam.model.model.to(device).eval()
        self.clip = CLIPModel.from_pretrained(str(Path(weights) / clip_name)).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(str(Path(weights) / clip_name))
        self._captured = {}
        for idx in PYRAMID_LAYERS:
            self.net.model[idx].register_forward_hook(self._hook(idx))
        self.channels = [lvl.shape[0] for lvl in self.pyramid(np.zeros((64, 64, 3), np.uint8))]

    def _hook(self, idx):
        def store(_module, _inputs, output):
            self._captured[idx] = output

        return store

    @torch.no_grad()
    def pyramid(self, rgb):
        h, w, _ = rgb.shape
        ph, pw = -(-h // 32) * 32, -(-w // 32) * 32
        padded = np.zeros((ph, pw, 3), np.float32)
        padded[:h, :w] = rgb.astype(np.float32) / 255.0
        x = torch.from_numpy(padded).permute(2, 0, 1)[None].to(self.device)
        self._captured.clear()
        self.net(x)
        levels = []
        for idx, s in zip(PYRAMID_LAYERS, STRIDES):
            f = self._captured[idx][0].float().cpu().numpy()
            levels.append(f[:, : -(-h // s), : -(-w // s)])
        return levels

    @torch.no_grad()
    def masks(self, rgb):
        bgr = np.ascontiguousarray(rgb[:, :, ::-1])
        results = self.sam(
            bgr,
            device=self.device,
            retina_masks=True,
            imgsz=self.imgsz,
            conf=self.conf,
            iou=self.iou,
            verbose=False,
        )
        if not results or results[0].masks is None:
            return []
        data = results[0].masks.data.cpu().numpy() > 0.5
        h, w, _ = rgb.shape
        return [m[:h, :w] for m in data if m.shape[0] >= h and m.shape[1] >= w]

    @torch.no_grad()
    def embed_image(self, rgb):
        from PIL import Image

        inputs = self.processor(images=Image.fromarray(rgb), return_tensors="pt").to(self.device)
        return self.clip.get_image_features(**inputs)[0].float().cpu().tolist()

    @torch.no_grad()
    def embed_texts(self, texts):
        inputs = self.processor(text=texts, return_tensors="pt", padding=True).to(self.device)
        return self.clip.get_text_features(**inputs).float().cpu().tolist()


def handle(models, req):
    op = req.get("op")
    if op == "info":
        return {"ok": True, "strides": list(STRIDES), "channels": models.channels}
    if op == "extract_pyramid":
        levels = models.pyramid(decode_image(req["image"]))
        return {"ok": True, "strides": list(STRIDES), "levels": [encode_level(lvl) for lvl in levels]}
    if op == "generate_masks":
        return {"ok": True, "masks": [pack_mask(m) for m in models.masks(decode_image(req["image"]))]}
    if op == "embed_image":
        return {"ok": True, "embedding": models.embed_image(decode_image(req["image"]))}
    if op == "embed_texts":
        return {"ok": True, "embeddings": models.embed_texts(req["texts"])}
    return {"ok": False, "error": f"unknown op {op!r}"}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weights", required=True)
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--fastsam", default="FastSAM-x.pt")
    ap.add_argument("--clip", default="clip-vit-base-patch32")
    ap.add_argument("--imgsz", type=int, default=1024)
    ap.add_argument("--conf", type=float, default=0.4)
    ap.add_argument("--iou", type=float, default=0.9)
    args = ap.parse_args()
    models = Models(args.weights, args.device, args.fastsam, args.clip, args.imgsz, args.conf, args.iou)
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            resp = handle(models, json.loads(line))
        except Exception as exc:  # reported to the client, never fatal
            resp = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
