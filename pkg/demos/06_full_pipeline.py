"""End to end: train a small model, then push fields through
enhance -> classify -> coverage exactly as the CLI does.

Run from the repository root:  python demos/06_full_pipeline.py
(Takes roughly twenty seconds.)
"""

import json
import tempfile
from pathlib import Path

from canecover.classifier import ClassifierConfig, load_split_arrays, save_classifier_model, train_arrays
from canecover.images import save_image, scan_dataset_dir, split_dataset
from canecover.pipeline import ModelStore, PipelineConfig, run_pipeline
from canecover.synth import FieldSpec, generate_classification_dataset, generate_field

work = Path(tempfile.mkdtemp(prefix="canecover_demo_"))
data = work / "dataset"
generate_classification_dataset(25, seed=9, out_dir=data, size=48)
split = split_dataset(scan_dataset_dir(data), 0.8, seed=1)

config = ClassifierConfig(input_size=32, conv_channels=(4, 8), epochs=60, batch_size=4)
train_x, train_y, val_x, val_y = load_split_arrays(data, split, config)
params, history = train_arrays(train_x, train_y, val_x, val_y, config, seed=0)
model_path = work / "classifier.cccl"
save_classifier_model(model_path, params, config)
print(f"trained model (val acc {history[-1].val_acc:.3f}) -> {model_path}")

spec = FieldSpec(width=96, height=96, gap_fraction_target=0.25, seed=42)
depopulated, _, truth = generate_field(spec)
depopulated_path = work / "depopulated.png"
save_image(depopulated, depopulated_path)

populated, _, _ = generate_field(
    FieldSpec(width=96, height=96, gap_fraction_target=0.0, seed=43, blob_count=3)
)
populated_path = work / "populated.png"
save_image(populated, populated_path)

pipeline_config = PipelineConfig(
    outscale=1,
    threshold_user=spec.ideal_threshold_user(),
    classifier_model=str(model_path),
)
models = ModelStore(pipeline_config)

print(f"\n--- depopulated field (true gap {100 * truth:.1f}%) ---")
result = run_pipeline(depopulated_path, pipeline_config, models)
print(json.dumps({k: v for k, v in result.items() if k != "timings_ms"}, indent=2))

print("\n--- fully populated field (coverage skipped by design) ---")
result = run_pipeline(populated_path, pipeline_config, models)
print(json.dumps({k: v for k, v in result.items() if k != "timings_ms"}, indent=2))

print("\nthe same runs are available from the shell:")
print(f"  canecover pipeline {depopulated_path} \\")
print(f"      --classifier-model {model_path} --threshold 4.7 --json")
