#!/usr/bin/env python3
"""
hsfuse - Hyperspectral and Multispectral Image Fusion

Usage:
    python hsfuse_run.py simulate --input ref.hsc --output-dir run/
    python hsfuse_run.py fuse --lr-hsi run/lr_hsi.hsc --msi run/hr_msi.hsc \
        --kernel run/kernel.krn --srf run/srf.csv --output-dir run/
    python hsfuse_run.py evaluate --ref ref.hsc --test run/fused.hsc --ratio 8

Environment Variables:
    HSFUSE_VERBOSE      Enable verbose logging: '1' or 'true'
    HSFUSE_PRECISION    Default precision: 'float64' or 'float32'
"""

from hsfuse.__main__ import main

if __name__ == "__main__":
    raise SystemExit(main())
