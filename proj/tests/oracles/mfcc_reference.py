# Copyright 2026 The avfuse Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Reference MFCC used to produce the frozen 1 kHz tone fixture.

Run: python3 tests/oracles/mfcc_reference.py
"""

import numpy as np
from scipy.fft import dct


def mel(hz):
    return 2595.0 * np.log10(1.0 + hz / 700.0)


def inv_mel(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mfcc(x, rate=16000, n_coeffs=13, n_filters=23, preemph=0.97, floor=1e-10):
    flen, fshift = int(round(0.025 * rate)), int(round(0.010 * rate))
    nfft = 1 << (flen - 1).bit_length()
    n = (len(x) - flen) // fshift + 1
    win = np.hamming(flen)
    edges = inv_mel(np.linspace(0.0, mel(rate / 2.0), n_filters + 2))
    freqs = np.arange(nfft // 2 + 1) * rate / nfft
    bank = np.zeros((n_filters, freqs.size))
    for j in range(n_filters):
        lo, c, hi = edges[j], edges[j + 1], edges[j + 2]
        up = (freqs > lo) & (freqs <= c)
        down = (freqs > c) & (freqs < hi)
        bank[j, up] = (freqs[up] - lo) / (c - lo)
        bank[j, down] = (hi - freqs[down]) / (hi - c)
    out = []
    for t in range(n):
        f = x[t * fshift: t * fshift + flen].astype(float)
        f = np.concatenate(([f[0] - preemph * f[0]], f[1:] - preemph * f[:-1]))
        spec = np.abs(np.fft.rfft(f * win, nfft)) ** 2
        logmel = np.log(np.maximum(bank @ spec, floor))
        out.append(dct(logmel, type=2, norm="ortho")[:n_coeffs])
    return np.array(out)


if __name__ == "__main__":
    rate = 16000
    t = np.arange(1600) / rate
    tone = 0.5 * np.sin(2 * np.pi * 1000.0 * t)
    m = mfcc(tone, rate)
    print(m.shape)
    print(",\n".join("%.12f" % v for v in m[3]))
