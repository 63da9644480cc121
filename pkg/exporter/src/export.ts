/**
 * Bundle assembly: weights straight from checkpoint bytes, activations
 * captured from a deterministic forward pass over the manifest's batch.
 */

import { UnknownLayer } from './errors.js';
import {
  Bundle,
  LayerRecord,
  TensorRecord,
  emptyBundle,
  float32Payload,
  toBytes,
} from './ffpb.js';
import { ExportManifest } from './manifest.js';
import {
  Checkpoint,
  CheckpointLayer,
  capturePostActivations,
  tensorBytes,
} from './model.js';

export const EXPORTER_VERSION = '0.1.0';

function mappedLayers(ckpt: Checkpoint, manifest: ExportManifest): CheckpointLayer[] {
  const byName = new Map(ckpt.layers.map((l) => [l.name, l]));
  return manifest.layers.map((m) => {
    const layer = byName.get(m.from);
    if (!layer) {
      throw new UnknownLayer(
        `manifest maps layer ${m.from}, checkpoint ${ckpt.name} has no such layer`);
    }
    return layer;
  });
}

function topology(manifest: ExportManifest, layers: CheckpointLayer[],
                  refsFor: (bundleName: string) => string[]): LayerRecord[] {
  const records: LayerRecord[] = [{ name: 'input', kind: 'input', tensors: [] }];
  manifest.layers.forEach((m, i) => {
    records.push({ name: m.to, kind: 'dense', tensors: refsFor(m.to) });
    if (layers[i]!.activation === 'relu') {
      records.push({ name: `${m.to}.relu`, kind: 'relu', tensors: [] });
    }
  });
  records.push({ name: 'output', kind: 'output', tensors: [] });
  return records;
}

/**
 * Copy the mapped layers' float32 parameters into a bundle, bit for bit.
 * Tensor and layer order follow the manifest.
 */
export function exportWeights(ckpt: Checkpoint, manifest: ExportManifest): Bundle {
  const layers = mappedLayers(ckpt, manifest);
  const bundle = emptyBundle();
  manifest.layers.forEach((m, i) => {
    const layer = layers[i]!;
    bundle.tensors.push({
      name: `${m.to}.weight`,
      role: m.role,
      dtype: 'fp32',
      shape: [...layer.weight.shape],
      payload: tensorBytes(layer.weight),
    });
    bundle.tensors.push({
      name: `${m.to}.bias`,
      role: m.role,
      dtype: 'fp32',
      shape: [...layer.bias.shape],
      payload: tensorBytes(layer.bias),
    });
  });
  bundle.layers = topology(manifest, layers,
    (name) => [`${name}.weight`, `${name}.bias`]);
  bundle.metadata.set('source', manifest.source);
  bundle.metadata.set('exporter', `ffpb-exporter ${EXPORTER_VERSION}`);
  bundle.metadata.set('contents', 'weights');
  return bundle;
}

/**
 * Run the checkpoint's capture batch through the model and export each
 * layer's post-activation tensor (role "activation", shape [rows, out]).
 */
export function exportActivations(ckpt: Checkpoint, manifest: ExportManifest): Bundle {
  const layers = mappedLayers(ckpt, manifest);
  const rows = ckpt.captureBatch.shape[0]!;
  const captured = capturePostActivations(ckpt);
  const byName = new Map(ckpt.layers.map((l, i) => [l.name, captured[i]!]));

  const bundle = emptyBundle();
  manifest.layers.forEach((m, i) => {
    const post = byName.get(m.from)!;
    const tensor: TensorRecord = {
      name: `${m.to}.act`,
      role: 'activation',
      dtype: 'fp32',
      shape: [rows, layers[i]!.outFeatures],
      payload: float32Payload(post),
    };
    bundle.tensors.push(tensor);
  });
  bundle.layers = topology(manifest, layers, (name) => [`${name}.act`]);
  bundle.metadata.set('source', manifest.source);
  bundle.metadata.set('exporter', `ffpb-exporter ${EXPORTER_VERSION}`);
  bundle.metadata.set('contents', 'activations');
  bundle.metadata.set('capture.description', manifest.capture.description);
  bundle.metadata.set('capture.rows', String(rows));
  return bundle;
}

export function bundleBytes(bundle: Bundle): Uint8Array {
  return toBytes(bundle);
}
