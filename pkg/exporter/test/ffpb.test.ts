/** Container writer/reader: round trips, validation, and cross-tool reads. */

import { spawnSync } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, describe, expect, it } from 'vitest';

import {
  BadMagic,
  BadVersion,
  DuplicateTensorName,
  TruncatedStream,
  UnresolvedReference,
} from '../src/errors.js';
import {
  Bundle,
  emptyBundle,
  float32Payload,
  float32Values,
  fromBytes,
  toBytes,
} from '../src/ffpb.js';

const scratch = mkdtempSync(join(tmpdir(), 'ffpb-'));
afterAll(() => rmSync(scratch, { recursive: true, force: true }));

function sampleBundle(): Bundle {
  const b = emptyBundle();
  b.tensors.push({
    name: 'dense1.weight',
    role: 'weight',
    dtype: 'fp32',
    shape: [2, 3],
    payload: float32Payload(new Float32Array([0.5, -1.25, 2, 7.5, -0, 3.0e-40])),
  });
  b.tensors.push({
    name: 'dense1.act',
    role: 'activation',
    dtype: 'ffp8',
    shape: [4],
    payload: new Uint8Array([0, 56, 255, 128]),
    fmt: { x: 1, y: 4, z: 3, b: 7 },
  });
  b.tensors.push({
    name: 'wide.codes',
    role: 'activation',
    dtype: 'ffp8',
    shape: [3],
    payload: new Uint8Array([0x34, 0x12, 0xff, 0x7f, 0x00, 0x80]),
    fmt: { x: 1, y: 6, z: 9, b: -5 },
  });
  b.layers.push({ name: 'input', kind: 'input', tensors: [] });
  b.layers.push({ name: 'dense1', kind: 'dense', tensors: ['dense1.weight'] });
  b.layers.push({ name: 'dense1.relu', kind: 'relu', tensors: ['dense1.act'] });
  b.layers.push({ name: 'output', kind: 'output', tensors: [] });
  b.metadata.set('source', 'unit test');
  b.metadata.set('note', 'π is not ASCII');
  return b;
}

describe('writer', () => {
  it('starts with the magic and version', () => {
    const data = toBytes(emptyBundle());
    expect(Array.from(data.subarray(0, 8))).toEqual([
      0x46, 0x46, 0x50, 0x42, 1, 0, 0, 0,
    ]);
  });

  it('rejects duplicate tensor names', () => {
    const b = emptyBundle();
    const t = {
      name: 't', role: 'weight' as const, dtype: 'fp32' as const,
      shape: [1], payload: float32Payload(new Float32Array([1])),
    };
    b.tensors.push(t, { ...t });
    expect(() => toBytes(b)).toThrow(DuplicateTensorName);
  });

  it('rejects dangling layer references', () => {
    const b = emptyBundle();
    b.layers.push({ name: 'dense1', kind: 'dense', tensors: ['ghost'] });
    expect(() => toBytes(b)).toThrow(UnresolvedReference);
  });

  it('rejects payloads that disagree with the shape', () => {
    const b = emptyBundle();
    b.tensors.push({
      name: 't', role: 'weight', dtype: 'fp32',
      shape: [3], payload: new Uint8Array(8),
    });
    expect(() => toBytes(b)).toThrow(/payload is 8 bytes/);
  });
});

describe('round trip', () => {
  it('write then read reproduces every field', () => {
    const b = sampleBundle();
    const back = fromBytes(toBytes(b));
    expect(back.tensors.map((t) => t.name)).toEqual(
      b.tensors.map((t) => t.name));
    for (const [i, t] of b.tensors.entries()) {
      const r = back.tensors[i]!;
      expect(r.role).toBe(t.role);
      expect(r.dtype).toBe(t.dtype);
      expect(r.shape).toEqual(t.shape);
      expect(Array.from(r.payload)).toEqual(Array.from(t.payload));
      expect(r.fmt).toEqual(t.fmt);
    }
    expect(back.layers).toEqual(b.layers);
    expect(Object.fromEntries(back.metadata)).toEqual(Object.fromEntries(b.metadata));
  });

  it('read then write reproduces the bytes', () => {
    const data = toBytes(sampleBundle());
    expect(Array.from(toBytes(fromBytes(data)))).toEqual(Array.from(data));
  });

  it('fp32 payload bytes survive bitwise, including -0 and subnormals', () => {
    const values = new Float32Array([-0, 3.0e-40, 1.1754944e-38, -1.5]);
    const b = emptyBundle();
    b.tensors.push({
      name: 't', role: 'weight', dtype: 'fp32', shape: [4],
      payload: float32Payload(values),
    });
    const r = fromBytes(toBytes(b)).tensors[0]!;
    expect(Array.from(float32Values(r), (v) => Object.is(v, -0) ? '-0' : v))
      .toEqual(['-0', Math.fround(3.0e-40), Math.fround(1.1754944e-38), -1.5]);
  });
});

describe('reader validation', () => {
  it('rejects a wrong magic', () => {
    expect(() => fromBytes(new TextEncoder().encode('NOPE\x01\x00\x00\x00')))
      .toThrow(BadMagic);
  });

  it('rejects an unknown version', () => {
    const data = toBytes(emptyBundle());
    data[4] = 9;
    expect(() => fromBytes(data)).toThrow(BadVersion);
  });

  it('rejects early ends at every cut point', () => {
    const data = toBytes(sampleBundle());
    for (const cut of [3, 7, 11, 20, data.byteLength - 1]) {
      expect(() => fromBytes(data.subarray(0, cut))).toThrow(TruncatedStream);
    }
  });

  it('rejects trailing bytes', () => {
    const data = toBytes(sampleBundle());
    const padded = new Uint8Array(data.byteLength + 1);
    padded.set(data);
    expect(() => fromBytes(padded)).toThrow(/trailing/);
  });
});

describe('bundles written by the python toolkit', () => {
  it('parse cleanly and carry the expected model structure', () => {
    const bundlePath = join(scratch, 'trained.ffpb');
    const proc = spawnSync(
      'python3', ['-m', 'ffp8', 'train', '--seed', '1', '--out', bundlePath],
      { env: { ...process.env, FFP8_NO_NUMBA: '1', PYTHONWARNINGS: 'ignore' } });
    expect(proc.status).toBe(0);

    const bundle = fromBytes(new Uint8Array(readFileSync(bundlePath)));
    const names = bundle.tensors.map((t) => t.name);
    expect(names).toContain('dense1.weight');
    expect(names).toContain('dense3.bias');
    const w1 = bundle.tensors.find((t) => t.name === 'dense1.weight')!;
    expect(w1.dtype).toBe('fp32');
    expect(w1.shape).toEqual([16, 32]);
    expect(w1.payload.byteLength).toBe(4 * 16 * 32);
    expect(bundle.layers[0]!.kind).toBe('input');
    expect(bundle.layers.at(-1)!.kind).toBe('output');
    expect(bundle.metadata.get('input_scale')).toBeDefined();
  });
});
