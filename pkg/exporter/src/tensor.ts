// Flat Float32Array math for the encoder forward pass. Matrices are
// row-major; matmul uses the i-k-j loop order so the inner loop walks both
// operands contiguously.

export interface Mat {
  data: Float32Array;
  rows: number;
  cols: number;
}

export function mat(rows: number, cols: number, data?: Float32Array): Mat {
  return { data: data ?? new Float32Array(rows * cols), rows, cols };
}

export function matmul(a: Mat, b: Mat): Mat {
  if (a.cols !== b.rows) {
    throw new Error(`matmul: ${a.rows}x${a.cols} does not contract with ${b.rows}x${b.cols}`);
  }
  const out = mat(a.rows, b.cols);
  const { data: ad } = a;
  const { data: bd } = b;
  const od = out.data;
  for (let i = 0; i < a.rows; i++) {
    const arow = i * a.cols;
    const orow = i * b.cols;
    for (let k = 0; k < a.cols; k++) {
      const av = ad[arow + k];
      if (av === 0) continue;
      const brow = k * b.cols;
      for (let j = 0; j < b.cols; j++) {
        od[orow + j] += av * bd[brow + j];
      }
    }
  }
  return out;
}

export function addBiasInPlace(x: Mat, bias: Float32Array): Mat {
  if (bias.length !== x.cols) {
    throw new Error(`bias length ${bias.length} != ${x.cols} columns`);
  }
  for (let i = 0; i < x.rows; i++) {
    const row = i * x.cols;
    for (let j = 0; j < x.cols; j++) x.data[row + j] += bias[j];
  }
  return x;
}

export function addInPlace(x: Mat, y: Mat): Mat {
  for (let i = 0; i < x.data.length; i++) x.data[i] += y.data[i];
  return x;
}

// tanh-approximated GELU, the convention of both encoder families
export function geluInPlace(x: Mat): Mat {
  const c = Math.sqrt(2 / Math.PI);
  for (let i = 0; i < x.data.length; i++) {
    const v = x.data[i];
    x.data[i] = 0.5 * v * (1 + Math.tanh(c * (v + 0.044715 * v * v * v)));
  }
  return x;
}

export function layerNorm(x: Mat, gain: Float32Array, bias: Float32Array, eps = 1e-5): Mat {
  const out = mat(x.rows, x.cols);
  for (let i = 0; i < x.rows; i++) {
    const row = i * x.cols;
    let mean = 0;
    for (let j = 0; j < x.cols; j++) mean += x.data[row + j];
    mean /= x.cols;
    let variance = 0;
    for (let j = 0; j < x.cols; j++) {
      const d = x.data[row + j] - mean;
      variance += d * d;
    }
    variance /= x.cols;
    const inv = 1 / Math.sqrt(variance + eps);
    for (let j = 0; j < x.cols; j++) {
      out.data[row + j] = (x.data[row + j] - mean) * inv * gain[j] + bias[j];
    }
  }
  return out;
}

export function softmaxRowsInPlace(x: Mat): Mat {
  for (let i = 0; i < x.rows; i++) {
    const row = i * x.cols;
    let max = -Infinity;
    for (let j = 0; j < x.cols; j++) max = Math.max(max, x.data[row + j]);
    let sum = 0;
    for (let j = 0; j < x.cols; j++) {
      const e = Math.exp(x.data[row + j] - max);
      x.data[row + j] = e;
      sum += e;
    }
    for (let j = 0; j < x.cols; j++) x.data[row + j] /= sum;
  }
  return x;
}

export function slice(x: Mat, rowStart: number, rowEnd: number): Mat {
  const out = mat(rowEnd - rowStart, x.cols);
  out.data.set(x.data.subarray(rowStart * x.cols, rowEnd * x.cols));
  return out;
}

export function sliceCols(x: Mat, colStart: number, colEnd: number): Mat {
  const width = colEnd - colStart;
  const out = mat(x.rows, width);
  for (let i = 0; i < x.rows; i++) {
    out.data.set(x.data.subarray(i * x.cols + colStart, i * x.cols + colEnd), i * width);
  }
  return out;
}

export function setCols(dst: Mat, src: Mat, colStart: number): void {
  for (let i = 0; i < src.rows; i++) {
    dst.data.set(src.data.subarray(i * src.cols, (i + 1) * src.cols), i * dst.cols + colStart);
  }
}

export function transpose(x: Mat): Mat {
  const out = mat(x.cols, x.rows);
  for (let i = 0; i < x.rows; i++) {
    for (let j = 0; j < x.cols; j++) out.data[j * x.rows + i] = x.data[i * x.cols + j];
  }
  return out;
}

export interface ConvSpec {
  kernel: number;
  stride: number;
  padSame: boolean; // zero-pad so output length is ceil(in / stride)
}

// 1-D convolution as im2col + matmul; weight layout is [kernel*inCh, outCh]
export function conv1d(x: Mat, weight: Mat, bias: Float32Array, spec: ConvSpec): Mat {
  const inCh = x.cols;
  if (weight.rows !== spec.kernel * inCh) {
    throw new Error(
      `conv1d: weight rows ${weight.rows} != kernel ${spec.kernel} * channels ${inCh}`
    );
  }
  let frames = x;
  let length = x.rows;
  if (spec.padSame) {
    const outLen = Math.ceil(length / spec.stride);
    const needed = (outLen - 1) * spec.stride + spec.kernel;
    const left = Math.floor((needed - length) / 2);
    const padded = mat(needed, inCh);
    padded.data.set(x.data, left * inCh);
    frames = padded;
    length = needed;
  }
  const oLen = Math.floor((length - spec.kernel) / spec.stride) + 1;
  const cols = spec.kernel * inCh;
  const patches = mat(oLen, cols);
  for (let t = 0; t < oLen; t++) {
    const start = t * spec.stride * inCh;
    patches.data.set(frames.data.subarray(start, start + cols), t * cols);
  }
  return addBiasInPlace(matmul(patches, weight), bias);
}

export function sinusoidalPositions(t: number, dim: number): Mat {
  const out = mat(t, dim);
  for (let pos = 0; pos < t; pos++) {
    for (let i = 0; i < dim; i++) {
      const angle = pos / Math.pow(10000, (2 * Math.floor(i / 2)) / dim);
      out.data[pos * dim + i] = i % 2 === 0 ? Math.sin(angle) : Math.cos(angle);
    }
  }
  return out;
}
