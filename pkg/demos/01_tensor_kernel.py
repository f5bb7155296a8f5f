"""Walk through the numeric kernel: convolution, pixel shuffling, pooling,
softmax, Adam, and power iteration.

Run from the repository root:  python demos/01_tensor_kernel.py
"""

import numpy as np

from canecover.tensor import (
    Conv2DSpec,
    adam_step,
    conv2d,
    global_avg_pool,
    init_adam_state,
    max_pool2,
    pixel_shuffle,
    pixel_unshuffle,
    power_iteration_sigma,
    softmax,
)

print("=== convolution ===")
image = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
kernel = Conv2DSpec(
    in_channels=1,
    out_channels=1,
    kernel_size=3,
    padding=1,
    weights=np.full((1, 1, 3, 3), 1 / 9),
    bias=np.zeros(1),
)
print("input:\n", image[0])
print("3x3 box blur:\n", conv2d(image, kernel)[0].round(2))

print("\n=== pixel unshuffle: spatial blocks become channels ===")
unshuffled = pixel_unshuffle(image, 2)
print("4x4 -> shape", unshuffled.shape, "(4 channels of 2x2)")
print("channel 0 (top-left of every 2x2 block):\n", unshuffled[0])
restored = pixel_shuffle(unshuffled, 2)
print("round trip exact:", bool((restored == image).all()))

print("\n=== pooling ===")
x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
print("max_pool2", max_pool2(x).ravel(), " global_avg_pool", global_avg_pool(x))

print("\n=== softmax ===")
logits = np.array([2.0, 0.5])
print("softmax([2, 0.5]) =", softmax(logits).round(4), "sums to", softmax(logits).sum())

print("\n=== Adam: first bias-corrected step has magnitude lr ===")
params = {"w": np.array([0.0])}
grads = {"w": np.array([1.0])}
new_params, _ = adam_step(params, grads, init_adam_state(params), lr=0.1, t=1)
print("param after one step with lr=0.1, grad=1:", new_params["w"])

print("\n=== power iteration: largest singular value ===")
matrix = np.diag([3.0, 1.0])
print("sigma(diag(3, 1)) =", power_iteration_sigma(matrix, iters=50))
scaled = power_iteration_sigma(10 * matrix, iters=50)
print("sigma(10 * A) =", scaled, "(scale-equivariant)")
