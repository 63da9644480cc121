/**
 * Export manifests: which checkpoint layers go into the bundle, under
 * which names, with which tensor roles, and a description of the capture
 * batch used for activation exports.
 */

import { readFileSync } from 'node:fs';

import { ManifestInvalid } from './errors.js';

export interface LayerMapping {
  /** Layer name inside the checkpoint. */
  from: string;
  /** Layer name to use inside the bundle. */
  to: string;
  /** Role recorded for the layer's parameter tensors. */
  role: 'weight';
}

export interface ExportManifest {
  /** Free-form identifier of the source model. */
  source: string;
  layers: LayerMapping[];
  capture: {
    /** Human-readable description of the activation capture batch. */
    description: string;
  };
}

export function validateManifest(doc: ExportManifest): ExportManifest {
  if (!doc.source) throw new ManifestInvalid('manifest has no source identifier');
  if (!Array.isArray(doc.layers) || doc.layers.length === 0) {
    throw new ManifestInvalid('manifest maps no layers');
  }
  const froms = new Set<string>();
  const tos = new Set<string>();
  for (const m of doc.layers) {
    if (!m.from || !m.to) throw new ManifestInvalid(`incomplete mapping ${JSON.stringify(m)}`);
    if (m.role !== 'weight') {
      throw new ManifestInvalid(`layer ${m.from}: role must be "weight", got ${JSON.stringify(m.role)}`);
    }
    if (froms.has(m.from)) throw new ManifestInvalid(`layer ${m.from} mapped twice`);
    if (tos.has(m.to)) throw new ManifestInvalid(`bundle name ${m.to} used twice`);
    froms.add(m.from);
    tos.add(m.to);
  }
  if (!doc.capture || typeof doc.capture.description !== 'string') {
    throw new ManifestInvalid('manifest has no capture batch description');
  }
  return doc;
}

export function loadManifest(path: string): ExportManifest {
  return validateManifest(JSON.parse(readFileSync(path, 'utf-8')) as ExportManifest);
}
