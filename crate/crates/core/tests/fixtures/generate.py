#!/usr/bin/env python3
"""Regenerates the bundled fixtures. Deterministic; run from crates/core.

Expected statistics for the frozen subset are computed here, independently
of the Rust implementation, and written next to it.
"""
import json
import math
import os
import random

CATS = ["apple", "orange", "lemon", "grapefruit", "tangerine"]


def dump(path, obj, indent=None):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=indent)
        f.write("\n")


def subset():
    rng = random.Random(20240501)
    images, anns = [], []
    for i in range(1, 41):
        region = "Michigan" if i % 7 == 3 else "California"
        images.append({"id": i, "file_name": f"img_{i:03d}.jpg", "width": 4000, "height": 3000, "region": region})
    aid = 0
    for img in images:
        if img["id"] in (17, 33):
            continue  # background frames
        main = (img["id"] - 1) % 5 + 1
        counts = {main: rng.randint(20, 90) if main != 5 else rng.randint(120, 160)}
        if img["id"] % 6 == 0:
            counts[main % 5 + 1] = rng.randint(1, 6)
        if main != 1 and img["region"] == "Michigan":
            counts = {1: counts[main]}
        for cat, n in sorted(counts.items()):
            for _ in range(n):
                w = round(rng.uniform(12, 60), 1)
                h = round(rng.uniform(12, 60), 1)
                x = round(rng.uniform(0, 3900), 1)
                y = round(rng.uniform(0, 2900), 1)
                aid += 1
                anns.append({"id": aid, "image_id": img["id"], "category_id": cat, "bbox": [x, y, w, h], "iscrowd": 0})
    cats = [{"id": i + 1, "name": n} for i, n in enumerate(CATS)]
    dump("tests/fixtures/subset/annotations.json", {"images": images, "annotations": anns, "categories": cats})

    def area(b):
        x, y, w, h = b
        return ((x + w) - x) * ((y + h) - y)

    def row(name, imgs, boxes):
        regions = []
        for img in images:
            if img["id"] in imgs and img["region"] not in regions:
                regions.append(img["region"])
        n_img, n_box = len(imgs), len(boxes)
        avg_b = round(n_box / n_img) if n_img else 0
        total = 0.0
        for b in boxes:
            total += area(b)
        avg_s = round(total / n_box) if n_box else 0
        return [name[0].upper() + name[1:], n_img, n_box, avg_b, avg_s, " & ".join(regions)]

    rows = []
    for c in cats:
        mine = [a for a in anns if a["category_id"] == c["id"]]
        rows.append(row(c["name"], {a["image_id"] for a in mine}, [a["bbox"] for a in mine]))
    rows.append(row("Total", {i["id"] for i in images}, [a["bbox"] for a in anns]))

    md = ["|  | # imgs | # bboxes | # avg. bboxes/image | # avg. size/instance | Region |",
          "| --- | --- | --- | --- | --- | --- |"]
    csv = ["category,imgs,bboxes,avg_bboxes_per_image,avg_size_per_instance,region"]
    for r in rows:
        md.append("| " + " | ".join([r[0]] + [format(v, ",") for v in r[1:5]] + [r[5]]) + " |")
        csv.append(",".join(str(v) for v in r))
    with open("tests/fixtures/subset/stats.md", "w") as f:
        f.write("\n".join(md) + "\n")
    with open("tests/fixtures/subset/stats.csv", "w") as f:
        f.write("\n".join(csv) + "\n")


def iou(a, b):
    ax1, ay1 = a[0] + a[2], a[1] + a[3]
    bx1, by1 = b[0] + b[2], b[1] + b[3]
    iw = max(0.0, min(ax1, bx1) - max(a[0], b[0]))
    ih = max(0.0, min(ay1, by1) - max(a[1], b[1]))
    inter = iw * ih
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def synthetic():
    rng = random.Random(7)
    images, anns = [], []
    for i in range(1, 31):
        images.append({"id": i, "file_name": f"synthetic_{i:02d}.jpg", "width": 640, "height": 480,
                       "region": "Michigan" if i % 10 == 1 else "California"})
    aid = 0
    occl = ["none", "leaf", "branch"]
    for img in images:
        main = (img["id"] - 1) % 5 + 1
        cats = [main] * rng.randint(4, 7)
        if img["id"] % 4 == 0:
            cats.append(main % 5 + 1)
        for k, cat in enumerate(cats):
            # Non-overlapping grid cells keep matches unambiguous.
            col, rowi = k % 4, k // 4
            w, h = rng.randint(40, 110), rng.randint(40, 110)
            x = col * 155 + rng.randint(0, 150 - w if w < 150 else 0)
            y = rowi * 230 + rng.randint(0, 220 - h)
            aid += 1
            anns.append({"id": aid, "image_id": img["id"], "category_id": cat, "bbox": [x, y, w, h],
                         "iscrowd": 0, "attributes": {"occlusion": occl[aid % 3]}})
    cats = [{"id": i + 1, "name": n} for i, n in enumerate(CATS)]
    dump("data/synthetic/annotations.json", {"images": images, "annotations": anns, "categories": cats}, 1)

    perfect = [{"image_id": a["image_id"], "category_id": a["category_id"], "bbox": a["bbox"],
                "score": round(0.5 + 0.5 * rng.random(), 4)} for a in anns]
    dump("data/synthetic/predictions_perfect.json", perfect, 1)
    dump("data/synthetic/predictions_empty.json", [])

    noisy = []
    seen = {}
    for a in anns:
        c = a["category_id"]
        seen[c] = seen.get(c, 0) + 1
        if seen[c] % 5 == 0:
            continue  # missed
        x, y, w, h = a["bbox"]
        dx, dy = rng.uniform(-0.12, 0.12) * w, rng.uniform(-0.12, 0.12) * h
        box = [round(max(0.0, x + dx), 2), round(max(0.0, y + dy), 2), w, h]
        noisy.append({"image_id": a["image_id"], "category_id": c, "bbox": box,
                      "score": round(0.3 + 0.7 * rng.random(), 4)})
    for img in images:
        c = (img["id"] - 1) % 5 + 1
        noisy.append({"image_id": img["id"], "category_id": c, "bbox": [600.0, 440.0, 30.0, 30.0],
                      "score": 0.99})
    dump("data/synthetic/predictions_noisy.json", noisy, 1)

    # Referring expressions: one prompt per target, scored against the
    # attribute-filtered truth.
    rec = []
    for a in anns:
        if a["category_id"] == 1:
            rec.append({"image_id": a["image_id"], "category_id": 1, "bbox": a["bbox"], "score": 0.9,
                        "prompt": "apple"})
            if a["attributes"]["occlusion"] != "branch":
                rec.append({"image_id": a["image_id"], "category_id": 1, "bbox": a["bbox"], "score": 0.8,
                            "prompt": "apple not occluded by branches"})
    dump("data/synthetic/predictions_rec.json", rec, 1)
    dump("data/synthetic/prompts.json", {
        "apple": {"categories": ["apple"]},
        "apple not occluded by branches": {
            "categories": ["apple"],
            "predicate": {"op": "not_equals", "key": "occlusion", "value": "branch"},
        },
    }, 2)

    with open("data/synthetic/grid.toml", "w") as f:
        f.write('annotations = "annotations.json"\nmetrics = ["mAP", "AP50", "mAR"]\nformat = "markdown"\n')
        for label, file in [("perfect", "perfect"), ("noisy", "noisy"), ("empty", "empty")]:
            f.write(f'\n[[rows]]\nlabel = "{label}"\npredictions = "predictions_{file}.json"\n'
                    'split = { kind = "train-test", fraction = 0.6, seed = 0 }\n')

    with open("data/synthetic/timing.jsonl", "w") as f:
        for model, ms in [("Retinanet", 45.7), ("FMFruit-T", 181.8)]:
            for i in range(1, 31):
                jitter = (i % 3 - 1) * 0.4
                f.write(json.dumps({"model": model, "image_id": i, "latency_ms": round(ms + jitter, 1)}) + "\n")

    batch = {"images": []}
    for img in images[:3]:
        targets, preds = [], []
        for a in [a for a in anns if a["image_id"] == img["id"]][:3]:
            mask = [a["category_id"] == t + 1 for t in range(5)]
            targets.append({"bbox": a["bbox"], "positive_tokens": mask})
            x, y, w, h = a["bbox"]
            preds.append({"bbox": [x + 2, y + 1, w - 3, h], "logits": [3.0 if m else -3.0 for m in mask]})
        preds.append({"bbox": [500, 400, 40, 40], "logits": [-2.0] * 5})
        batch["images"].append({"image_id": img["id"], "width": img["width"], "height": img["height"],
                                "predictions": preds, "targets": targets})
    dump("data/synthetic/loss_batch.json", batch, 1)

    for img in images[:3]:
        shapes = []
        for a in [a for a in anns if a["image_id"] == img["id"]]:
            x, y, w, h = a["bbox"]
            shapes.append({"label": CATS[a["category_id"] - 1].capitalize(), "points": [[x, y], [x + w, y + h]],
                           "shape_type": "rectangle", "flags": {}})
        shapes.append({"label": "leaf", "points": [[1, 1], [20, 5], [9, 30]], "shape_type": "polygon", "flags": {}})
        dump(f"data/labelme/{img['file_name'].replace('.jpg', '.json')}",
             {"version": "5.2.1", "flags": {}, "shapes": shapes, "imagePath": img["file_name"], "imageData": None,
              "imageHeight": img["height"], "imageWidth": img["width"]}, 1)


if __name__ == "__main__":
    subset()
    synthetic()
