"""Train the populated/depopulated classifier on a small synthetic dataset
and read its learning curve and confusion matrix.

Run from the repository root:  python demos/05_classifier_training.py
(Takes roughly ten seconds; the full-size reference run uses the CLI.)
"""

import tempfile
from pathlib import Path

from canecover.classifier import (
    ClassifierConfig,
    evaluate_arrays,
    history_csv,
    load_split_arrays,
    predict,
    train_arrays,
)
from canecover.images import scan_dataset_dir, split_dataset
from canecover.synth import FieldSpec, generate_classification_dataset, generate_field

root = Path(tempfile.mkdtemp(prefix="canecover_demo_"))
print("dataset in", root)
generate_classification_dataset(25, seed=3, out_dir=root, size=48)
split = split_dataset(scan_dataset_dir(root), train_fraction=0.8, seed=1)
print("split counts:", split.counts())

# desk-scale network: 32px input, two conv blocks, enough epochs to converge
config = ClassifierConfig(input_size=32, conv_channels=(4, 8), epochs=60, batch_size=4)
train_x, train_y, val_x, val_y = load_split_arrays(root, split, config)
params, history = train_arrays(train_x, train_y, val_x, val_y, config, seed=0)

print("\nlearning curve (epoch, train_loss, train_acc, val_loss, val_acc):")
for e in history[:: max(1, len(history) // 6)]:
    print(f"  {e.epoch:3d}  {e.train_loss:.4f}  {e.train_acc:.3f}  {e.val_loss:.4f}  {e.val_acc:.3f}")
print("CSV form:\n" + "\n".join(history_csv(history).splitlines()[:3]) + "\n  ...")

print("\nconfusion matrix on the test split (rows true, cols predicted):")
cm = evaluate_arrays(val_x, val_y, params, config)
print(" ", cm.class_names)
print(" ", cm.counts.tolist(), "accuracy", cm.accuracy)

print("\npredictions on fresh fields:")
for target, want in ((0.0, "poblada"), (0.35, "despoblada")):
    field, _, _ = generate_field(
        FieldSpec(width=64, height=64, gap_fraction_target=target, seed=777, blob_count=3 if target == 0 else 6)
    )
    p = predict(field, params, config)
    probs = ", ".join(f"{k} {100 * v:.1f}%" for k, v in p.to_json_dict()["probs"].items())
    print(f"  gap {target:.2f}: predicted {p.label} ({probs}) — expected {want}")
