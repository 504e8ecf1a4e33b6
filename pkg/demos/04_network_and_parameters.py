#!/usr/bin/env python3
"""Build the subband-injection network and account for every parameter.

Stage t of the backbone halves the resolution with a stride-2 convolution
and receives the level-t detail subbands through a 1x1 projection, so each
decomposition level meets feature maps of its own extent. The analysis
filters are fixed: the census below contains no wavelet entries.
"""

import numpy as np

from wcnn import Tensor, WaveletCnnConfig, build, forward, param_count
from wcnn.model import ablate_to_plain_cnn

full_scale = WaveletCnnConfig()  # 5 levels, 224x224, 1000 classes
model = build(full_scale)
total, breakdown = param_count(model)
print(f"default 5-level config: {total:,} trainable parameters")
print(f"injection extents     : {model.injection_extents}")

embed = WaveletCnnConfig(embedding_dim=2048)
print(f"with 2048-d embedding : {param_count(build(embed))[0]:,}")

desk = WaveletCnnConfig(levels=3, input_size=32, input_channels=1,
                        channels=(12, 24, 32), num_classes=6)
desk_model = build(desk)
print(f"\ndesk-scale 3-level config, per-layer census:")
for name, count in param_count(desk_model)[1]:
    print(f"  {name:20s} {count:7,}")

plain = ablate_to_plain_cnn(desk)
print(f"\nfull {param_count(desk_model)[0]:,} vs detail-free baseline "
      f"{param_count(plain)[0]:,} parameters")

logits = forward(desk_model, Tensor(np.zeros((2, 1, 32, 32)), dtype="f32"))
print(f"forward on a zero batch -> logits shape {logits.value.shape}")
