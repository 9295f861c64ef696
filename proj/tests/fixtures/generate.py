#!/usr/bin/env python3
"""Regenerates the committed test fixtures.

    python3 tests/fixtures/generate.py

Outputs (next to this script):
  field_530x144.jpg      natural photo crop, quality 95
  two_squares.png        dark noisy background with two bright squares
  two_squares.json       planted square geometry (pixels and normalized)
  mock_fixtures.json     canned detections for the mock detector backend
  eval/gt.json           20-image ground truth
  eval/pred/*.json       predictions, one document per image
  eval/golden.json       expected report, computed by the brute-force oracle below
"""
import json
import os
import random

import numpy as np
from PIL import Image
from skimage import data

HERE = os.path.dirname(os.path.abspath(__file__))
IOU = 0.55


def photo():
    img = data.coffee()[120:264, 35:565]  # 144 x 530
    Image.fromarray(img).save(os.path.join(HERE, "field_530x144.jpg"), quality=95)


def squares():
    rng = np.random.default_rng(7)
    w, h = 200, 120
    img = rng.integers(10, 120, size=(h, w, 3), dtype=np.uint8)
    planted = [(20, 30, 30, 30), (120, 50, 40, 36)]  # x, y, width, height
    for x, y, sw, sh in planted:
        img[y:y + sh, x:x + sw] = 255
    Image.fromarray(img).save(os.path.join(HERE, "two_squares.png"))
    geometry = {
        "width": w,
        "height": h,
        "squares": [
            {"x": x, "y": y, "w": sw, "h": sh,
             "topX": x / w, "topY": y / h, "bottomX": (x + sw) / w, "bottomY": (y + sh) / h}
            for x, y, sw, sh in planted
        ],
    }
    with open(os.path.join(HERE, "two_squares.json"), "w") as f:
        json.dump(geometry, f, indent=2)


def mock():
    table = [
        {"filename": "e2e_0001.jpg", "boxes": [
            {"box": {"topX": 0.10, "topY": 0.20, "bottomX": 0.30, "bottomY": 0.60}, "label": "bloom", "score": 0.91},
            {"box": {"topX": 0.55, "topY": 0.15, "bottomX": 0.70, "bottomY": 0.55}, "label": "bloom", "score": 0.78}]},
        {"filename": "field_530x144.jpg", "boxes": [
            {"box": {"topX": 0.40, "topY": 0.10, "bottomX": 0.52, "bottomY": 0.70}, "label": "bloom", "score": 0.66}]},
    ]
    with open(os.path.join(HERE, "mock_fixtures.json"), "w") as f:
        json.dump(table, f, indent=2)


# ---------------------------------------------------------------- oracle

def iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def match(preds, gts):
    """Greedy: highest score first (stable), best unmatched gt with IoU >= IOU."""
    order = sorted(range(len(preds)), key=lambda i: -preds[i][1])
    used = [False] * len(gts)
    flags = [False] * len(preds)
    for i in order:
        best, best_iou = -1, -1.0
        for g, gt in enumerate(gts):
            if used[g]:
                continue
            v = iou(preds[i][0], gt)
            if v >= IOU and v > best_iou:
                best, best_iou = g, v
        if best >= 0:
            used[best] = True
            flags[i] = True
    return flags


def brute_force_ap(pred_set, gt_set):
    total_gt = sum(len(v) for v in gt_set.values())
    scores = sorted({s for preds in pred_set.values() for _, s in preds}, reverse=True)
    points = []
    for t in scores:
        tp = fp = 0
        for name, preds in pred_set.items():
            kept = [p for p in preds if p[1] >= t]
            flags = match(kept, gt_set.get(name, []))
            tp += sum(flags)
            fp += len(flags) - sum(flags)
        points.append((tp / total_gt, tp / (tp + fp)))
    ap, prev_r = 0.0, 0.0
    for r, _ in sorted(points):
        if r <= prev_r:
            continue
        p = max(pp for rr, pp in points if rr >= r)
        ap += (r - prev_r) * p
        prev_r = r
    return ap


def corpus():
    rng = random.Random(2024)
    out = os.path.join(HERE, "eval")
    os.makedirs(os.path.join(out, "pred"), exist_ok=True)
    gt_doc = {"images": []}
    gt_set, pred_set = {}, {}
    for i in range(20):
        name = f"plot_{i:02d}.jpg"
        gts = []
        for _ in range(rng.randint(0, 5)):
            x, y = rng.uniform(0, 0.8), rng.uniform(0, 0.8)
            w, h = rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2)
            gts.append([round(x, 4), round(y, 4), round(x + w, 4), round(y + h, 4)])
        preds = []
        for g in gts:
            if rng.random() < 0.8:
                j = 0.03 if rng.random() < 0.7 else 0.12
                box = [round(min(max(v + rng.uniform(-j, j) * (g[2] - g[0]), 0.0), 1.0), 4) for v in g]
                if box[2] > box[0] and box[3] > box[1]:
                    preds.append((box, round(rng.uniform(0.3, 1.0), 2)))
        for _ in range(rng.randint(0, 2)):
            x, y = rng.uniform(0, 0.85), rng.uniform(0, 0.85)
            preds.append(([round(x, 4), round(y, 4), round(x + 0.1, 4), round(y + 0.1, 4)],
                          round(rng.uniform(0.1, 0.9), 2)))
        gt_doc["images"].append({"filename": name, "boxes": [
            {"topX": b[0], "topY": b[1], "bottomX": b[2], "bottomY": b[3]} for b in gts]})
        gt_set[name] = gts
        if preds:
            pred_set[name] = preds
            with open(os.path.join(out, "pred", name.replace(".jpg", ".json")), "w") as f:
                json.dump({"filename": name, "boxes": [
                    {"box": {"topX": b[0], "topY": b[1], "bottomX": b[2], "bottomY": b[3]}, "label": "bloom", "score": s}
                    for b, s in preds]}, f, indent=2)
    with open(os.path.join(out, "gt.json"), "w") as f:
        json.dump(gt_doc, f, indent=2)

    tp = fp = fn = 0
    per_image = {}
    for name in sorted(set(gt_set) | set(pred_set)):
        preds, gts = pred_set.get(name, []), gt_set.get(name, [])
        flags = match(preds, gts)
        c = {"tp": sum(flags), "fp": len(flags) - sum(flags), "fn": len(gts) - sum(flags)}
        per_image[name] = c
        tp, fp, fn = tp + c["tp"], fp + c["fp"], fn + c["fn"]
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    ap = brute_force_ap(pred_set, gt_set)
    golden = {"iou_threshold": IOU, "tp": tp, "fp": fp, "fn": fn, "precision": p, "recall": r, "f1": f1,
              "ap": ap, "map": ap, "per_image": per_image}
    with open(os.path.join(out, "golden.json"), "w") as f:
        json.dump(golden, f, indent=2)


if __name__ == "__main__":
    photo()
    squares()
    mock()
    corpus()
