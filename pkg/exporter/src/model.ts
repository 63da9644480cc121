/**
 * Checkpoint loading and a minimal dense/ReLU forward pass.
 *
 * A checkpoint is a JSON file describing a stack of dense layers with
 * optional ReLU activations, float32 parameters stored as base64 raw
 * little-endian bytes, and a fixed capture batch used when exporting
 * activations. The forward pass exists only so activations can be captured
 * deterministically; it is not an inference engine.
 */

import { readFileSync } from 'node:fs';

import { DtypeUnsupported, ExporterError } from './errors.js';

export interface CheckpointTensor {
  dtype: string;
  shape: number[];
  /** Raw little-endian element bytes, base64 encoded. */
  data: string;
}

export interface CheckpointLayer {
  name: string;
  activation: 'relu' | 'none';
  inFeatures: number;
  outFeatures: number;
  /** Row-major [inFeatures, outFeatures]. */
  weight: CheckpointTensor;
  /** [outFeatures]. */
  bias: CheckpointTensor;
}

export interface Checkpoint {
  name: string;
  layers: CheckpointLayer[];
  /** Fixed batch for activation capture, shape [rows, layers[0].inFeatures]. */
  captureBatch: CheckpointTensor;
}

export function tensorBytes(t: CheckpointTensor): Uint8Array {
  if (t.dtype !== 'float32') {
    throw new DtypeUnsupported(`cannot export dtype ${t.dtype}; only float32 is supported`);
  }
  const raw = Buffer.from(t.data, 'base64');
  const count = t.shape.reduce((acc, d) => acc * d, 1);
  if (raw.byteLength !== 4 * count) {
    throw new ExporterError(
      `tensor data holds ${raw.byteLength} bytes, shape [${t.shape}] needs ${4 * count}`);
  }
  return new Uint8Array(raw);
}

export function tensorValues(t: CheckpointTensor): Float32Array {
  const bytes = tensorBytes(t);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const out = new Float32Array(bytes.byteLength / 4);
  for (let i = 0; i < out.length; i += 1) out[i] = view.getFloat32(4 * i, true);
  return out;
}

export function loadCheckpoint(path: string): Checkpoint {
  const doc = JSON.parse(readFileSync(path, 'utf-8')) as Checkpoint;
  if (!doc.name || !Array.isArray(doc.layers) || doc.layers.length === 0) {
    throw new ExporterError(`checkpoint ${path} has no layers`);
  }
  for (const layer of doc.layers) {
    if (layer.activation !== 'relu' && layer.activation !== 'none') {
      throw new ExporterError(`layer ${layer.name}: unknown activation ${layer.activation}`);
    }
    const [inF, outF] = [layer.inFeatures, layer.outFeatures];
    const wShape = layer.weight.shape;
    if (wShape.length !== 2 || wShape[0] !== inF || wShape[1] !== outF) {
      throw new ExporterError(`layer ${layer.name}: weight shape [${wShape}] != [${inF}, ${outF}]`);
    }
    if (layer.bias.shape.length !== 1 || layer.bias.shape[0] !== outF) {
      throw new ExporterError(`layer ${layer.name}: bias shape [${layer.bias.shape}]`);
    }
    tensorBytes(layer.weight);
    tensorBytes(layer.bias);
  }
  const batchShape = doc.captureBatch.shape;
  if (batchShape.length !== 2 || batchShape[1] !== doc.layers[0]!.inFeatures) {
    throw new ExporterError(`capture batch shape [${batchShape}] does not feed layer 1`);
  }
  tensorBytes(doc.captureBatch);
  return doc;
}

/**
 * Run the capture batch through the model and return each layer's
 * post-activation matrix (row-major [rows, outFeatures]).
 *
 * Accumulation happens in float64; each output is rounded to float32 once,
 * before ReLU, so repeated runs are bit-identical.
 */
export function capturePostActivations(ckpt: Checkpoint): Float32Array[] {
  const rows = ckpt.captureBatch.shape[0]!;
  let current = tensorValues(ckpt.captureBatch);
  const captured: Float32Array[] = [];
  for (const layer of ckpt.layers) {
    const w = tensorValues(layer.weight);
    const bias = tensorValues(layer.bias);
    const [inF, outF] = [layer.inFeatures, layer.outFeatures];
    const out = new Float32Array(rows * outF);
    for (let r = 0; r < rows; r += 1) {
      for (let j = 0; j < outF; j += 1) {
        let acc = bias[j]!;
        for (let i = 0; i < inF; i += 1) {
          acc += current[r * inF + i]! * w[i * outF + j]!;
        }
        const v = Math.fround(acc);
        out[r * outF + j] = layer.activation === 'relu' && v < 0 ? 0 : v;
      }
    }
    captured.push(out);
    current = out;
  }
  return captured;
}
