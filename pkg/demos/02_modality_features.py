"""Feature files, alignment and fusion.

Builds two MMF1 feature files (text and image) covering different item
subsets, aligns them to a dense item index with imputation, and applies the
three fusion operators.
"""

from pathlib import Path

import numpy as np

from mmrec import align_features, fuse, load_feature_matrix, write_matrix

out_dir = Path("demo_output/features")
out_dir.mkdir(parents=True, exist_ok=True)

# Post-filter catalog of four items with dense indices 0..3.
item_map = {"item_a": 0, "item_b": 1, "item_c": 2, "item_d": 3}

# Text features cover every item; image features miss item_d.
rng = np.random.default_rng(0)
text = rng.normal(size=(4, 3)).astype(np.float32)
image = rng.normal(size=(3, 3)).astype(np.float32)

write_matrix(out_dir / "text.mmf", text)
(out_dir / "text_ids.txt").write_text("item_a\nitem_b\nitem_c\nitem_d\n")
write_matrix(out_dir / "image.mmf", image)
(out_dir / "image_ids.txt").write_text("item_c\nitem_a\nitem_b\n")  # any row order

text_fm = load_feature_matrix(out_dir / "text.mmf", out_dir / "text_ids.txt")
image_fm = load_feature_matrix(out_dir / "image.mmf", out_dir / "image_ids.txt")
print(f"text matrix {text_fm.rows}x{text_fm.dim}, image matrix {image_fm.rows}x{image_fm.dim}")

# Alignment permutes rows into dense-index order and fills gaps. item_d has
# no image row: with the mean policy it receives the column means.
text_table = align_features(text_fm, item_map, kind="text")
image_table = align_features(image_fm, item_map, kind="image", policy="mean")
print(f"image present mask: {image_table.present_mask.tolist()}")
print(f"imputed image row for item_d: {np.round(image_table.features[3], 3).tolist()}")

# Fusion always applies the canonical modality order (text < image < audio
# < video), so the caller's list order cannot change the result.
for method in ("concat", "sum", "mean"):
    fused = fuse([image_table, text_table], method)
    print(f"{method:6s} -> item-feature matrix {fused.shape[0]}x{fused.shape[1]}")

flipped = fuse([text_table, image_table], "concat")
assert np.array_equal(flipped, fuse([image_table, text_table], "concat"))
print("concat is order-insensitive: columns are text first, then image")
