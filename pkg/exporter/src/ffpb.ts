/**
 * FFPB tensor-bundle container: writer and verifying reader.
 *
 * Layout, all integers little-endian:
 *
 *     magic   4 bytes  "FFPB"
 *     version u32      currently 1
 *     tcount  u32      number of tensors
 *     per tensor:
 *         nlen u16, name (UTF-8)
 *         role u8      0 = weight, 1 = activation
 *         dtype u8     0 = fp32, 1 = ffp8
 *         if ffp8: x u8, y u8, z u8, b i16
 *         rank u8, extents u32 * rank
 *         payload      fp32: 4 bytes per element
 *                      ffp8: 1 byte per code when x+y+z <= 8, else 2
 *     lcount  u32      layer records: nlen u16, name, kind u8
 *                      (0 input, 1 dense, 2 relu, 3 output),
 *                      refcount u8, refs as nlen u16 + name
 *     mcount  u32      metadata: klen u16, key; vlen u32, value
 *
 * Payloads are carried as raw bytes end to end, so what goes in comes out
 * bit for bit. The reader rejects wrong magic, unknown versions, early
 * ends, duplicate tensor names, dangling layer references, and trailing
 * garbage after the last section.
 */

import {
  BadMagic,
  BadVersion,
  DuplicateTensorName,
  ExporterError,
  TruncatedStream,
  UnresolvedReference,
} from './errors.js';

export const MAGIC = 'FFPB';
export const VERSION = 1;

export type Role = 'weight' | 'activation';
export type Dtype = 'fp32' | 'ffp8';
export type LayerKind = 'input' | 'dense' | 'relu' | 'output';

const ROLE_TO_BYTE: Record<Role, number> = { weight: 0, activation: 1 };
const DTYPE_TO_BYTE: Record<Dtype, number> = { fp32: 0, ffp8: 1 };
const KIND_TO_BYTE: Record<LayerKind, number> = {
  input: 0, dense: 1, relu: 2, output: 3,
};
const BYTE_TO_ROLE = invert(ROLE_TO_BYTE);
const BYTE_TO_DTYPE = invert(DTYPE_TO_BYTE);
const BYTE_TO_KIND = invert(KIND_TO_BYTE);

function invert<K extends string>(map: Record<K, number>): Map<number, K> {
  const out = new Map<number, K>();
  for (const key of Object.keys(map) as K[]) out.set(map[key], key);
  return out;
}

/** Bit layout of an 8..16-bit float format: sign/exponent/fraction/bias. */
export interface FormatSpec {
  x: number;
  y: number;
  z: number;
  b: number;
}

export function formatWidth(fmt: FormatSpec): number {
  return fmt.x + fmt.y + fmt.z;
}

function checkFormat(fmt: FormatSpec): void {
  const n = formatWidth(fmt);
  if (fmt.x !== 0 && fmt.x !== 1) throw new ExporterError(`sign width must be 0 or 1, got ${fmt.x}`);
  if (fmt.y < 1) throw new ExporterError(`exponent width must be >= 1, got ${fmt.y}`);
  if (fmt.z < 0) throw new ExporterError(`fraction width must be >= 0, got ${fmt.z}`);
  if (n < 4 || n > 16) throw new ExporterError(`total width ${n} outside [4, 16]`);
  if (fmt.b < -128 || fmt.b > 127) throw new ExporterError(`bias ${fmt.b} outside [-128, 127]`);
}

/** One named tensor. The payload is raw little-endian bytes. */
export interface TensorRecord {
  name: string;
  role: Role;
  dtype: Dtype;
  shape: number[];
  payload: Uint8Array;
  fmt?: FormatSpec;
}

export interface LayerRecord {
  name: string;
  kind: LayerKind;
  tensors: string[];
}

export interface Bundle {
  tensors: TensorRecord[];
  layers: LayerRecord[];
  metadata: Map<string, string>;
}

export function emptyBundle(): Bundle {
  return { tensors: [], layers: [], metadata: new Map() };
}

function elementCount(shape: number[]): number {
  return shape.reduce((acc, d) => acc * d, 1);
}

function payloadBytesPerElement(t: TensorRecord): number {
  if (t.dtype === 'fp32') return 4;
  if (!t.fmt) throw new ExporterError(`ffp8 tensor ${t.name} has no format`);
  return formatWidth(t.fmt) <= 8 ? 1 : 2;
}

function checkTensor(t: TensorRecord): void {
  if (!(t.role in ROLE_TO_BYTE)) throw new ExporterError(`unknown role ${t.role}`);
  if (!(t.dtype in DTYPE_TO_BYTE)) throw new ExporterError(`unknown dtype ${t.dtype}`);
  if (t.fmt) checkFormat(t.fmt);
  const want = elementCount(t.shape) * payloadBytesPerElement(t);
  if (t.payload.byteLength !== want) {
    throw new ExporterError(
      `tensor ${t.name}: payload is ${t.payload.byteLength} bytes, shape needs ${want}`);
  }
}

// ---------------------------------------------------------------------------
// Writer
// ---------------------------------------------------------------------------

class ByteWriter {
  private chunks: Uint8Array[] = [];
  private scratch = new DataView(new ArrayBuffer(8));
  private encoder = new TextEncoder();

  bytes(data: Uint8Array): void {
    this.chunks.push(data);
  }

  u8(v: number): void {
    this.bytes(new Uint8Array([v & 0xff]));
  }

  u16(v: number): void {
    this.scratch.setUint16(0, v, true);
    this.bytes(new Uint8Array(this.scratch.buffer.slice(0, 2)));
  }

  i16(v: number): void {
    this.scratch.setInt16(0, v, true);
    this.bytes(new Uint8Array(this.scratch.buffer.slice(0, 2)));
  }

  u32(v: number): void {
    this.scratch.setUint32(0, v, true);
    this.bytes(new Uint8Array(this.scratch.buffer.slice(0, 4)));
  }

  name(text: string): void {
    const raw = this.encoder.encode(text);
    if (raw.byteLength > 0xffff) throw new ExporterError(`name too long: ${text.slice(0, 32)}...`);
    this.u16(raw.byteLength);
    this.bytes(raw);
  }

  concat(): Uint8Array {
    const total = this.chunks.reduce((acc, c) => acc + c.byteLength, 0);
    const out = new Uint8Array(total);
    let pos = 0;
    for (const c of this.chunks) {
      out.set(c, pos);
      pos += c.byteLength;
    }
    return out;
  }
}

/** Serialize a bundle to FFPB bytes. */
export function toBytes(bundle: Bundle): Uint8Array {
  const names = new Set<string>();
  for (const t of bundle.tensors) {
    if (names.has(t.name)) throw new DuplicateTensorName(t.name);
    names.add(t.name);
    checkTensor(t);
  }
  for (const layer of bundle.layers) {
    for (const ref of layer.tensors) {
      if (!names.has(ref)) {
        throw new UnresolvedReference(
          `layer ${layer.name} references missing tensor ${ref}`);
      }
    }
  }

  const w = new ByteWriter();
  w.bytes(new TextEncoder().encode(MAGIC));
  w.u32(VERSION);
  w.u32(bundle.tensors.length);
  for (const t of bundle.tensors) {
    w.name(t.name);
    w.u8(ROLE_TO_BYTE[t.role]);
    w.u8(DTYPE_TO_BYTE[t.dtype]);
    if (t.dtype === 'ffp8' && t.fmt) {
      w.u8(t.fmt.x);
      w.u8(t.fmt.y);
      w.u8(t.fmt.z);
      w.i16(t.fmt.b);
    }
    if (t.shape.length > 0xff) throw new ExporterError(`rank ${t.shape.length} too large`);
    w.u8(t.shape.length);
    for (const d of t.shape) w.u32(d);
    w.bytes(t.payload);
  }
  w.u32(bundle.layers.length);
  for (const layer of bundle.layers) {
    w.name(layer.name);
    w.u8(KIND_TO_BYTE[layer.kind]);
    w.u8(layer.tensors.length);
    for (const ref of layer.tensors) w.name(ref);
  }
  w.u32(bundle.metadata.size);
  for (const [key, value] of bundle.metadata) {
    w.name(key);
    const raw = new TextEncoder().encode(value);
    w.u32(raw.byteLength);
    w.bytes(raw);
  }
  return w.concat();
}

// ---------------------------------------------------------------------------
// Reader
// ---------------------------------------------------------------------------

class ByteReader {
  private pos = 0;
  private view: DataView;
  private decoder = new TextDecoder('utf-8', { fatal: true });

  constructor(private data: Uint8Array) {
    this.view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  }

  take(count: number): Uint8Array {
    if (this.pos + count > this.data.byteLength) {
      throw new TruncatedStream(
        `needed ${count} bytes at offset ${this.pos}, ` +
        `only ${this.data.byteLength - this.pos} left`);
    }
    const chunk = this.data.subarray(this.pos, this.pos + count);
    this.pos += count;
    return chunk;
  }

  u8(): number { return this.take(1)[0]!; }
  u16(): number { const p = this.pos; this.take(2); return this.view.getUint16(p, true); }
  i16(): number { const p = this.pos; this.take(2); return this.view.getInt16(p, true); }
  u32(): number { const p = this.pos; this.take(4); return this.view.getUint32(p, true); }
  name(): string { return this.decoder.decode(this.take(this.u16())); }
  done(): boolean { return this.pos === this.data.byteLength; }
  remaining(): number { return this.data.byteLength - this.pos; }
}

/** Parse FFPB bytes back into a bundle. Payload bytes are copied out. */
export function fromBytes(data: Uint8Array): Bundle {
  const r = new ByteReader(data);
  const magic = new TextDecoder().decode(r.take(4));
  if (magic !== MAGIC) throw new BadMagic('not an FFPB stream');
  const version = r.u32();
  if (version !== VERSION) throw new BadVersion(`unsupported container version ${version}`);

  const bundle = emptyBundle();
  const names = new Set<string>();
  const tcount = r.u32();
  for (let i = 0; i < tcount; i += 1) {
    const name = r.name();
    if (names.has(name)) throw new DuplicateTensorName(name);
    names.add(name);
    const role = BYTE_TO_ROLE.get(r.u8());
    const dtype = BYTE_TO_DTYPE.get(r.u8());
    if (!role) throw new ExporterError('unknown role byte');
    if (!dtype) throw new ExporterError('unknown dtype byte');
    let fmt: FormatSpec | undefined;
    if (dtype === 'ffp8') {
      fmt = { x: r.u8(), y: r.u8(), z: r.u8(), b: r.i16() };
      checkFormat(fmt);
    }
    const rank = r.u8();
    const shape: number[] = [];
    for (let d = 0; d < rank; d += 1) shape.push(r.u32());
    const per = dtype === 'fp32' ? 4 : formatWidth(fmt!) <= 8 ? 1 : 2;
    const payload = new Uint8Array(r.take(elementCount(shape) * per));
    bundle.tensors.push({ name, role, dtype, shape, payload, fmt });
  }
  const lcount = r.u32();
  for (let i = 0; i < lcount; i += 1) {
    const name = r.name();
    const kind = BYTE_TO_KIND.get(r.u8());
    if (!kind) throw new ExporterError('unknown layer kind byte');
    const refcount = r.u8();
    const refs: string[] = [];
    for (let k = 0; k < refcount; k += 1) refs.push(r.name());
    for (const ref of refs) {
      if (!names.has(ref)) {
        throw new UnresolvedReference(`layer ${name} references missing tensor ${ref}`);
      }
    }
    bundle.layers.push({ name, kind, tensors: refs });
  }
  const mcount = r.u32();
  for (let i = 0; i < mcount; i += 1) {
    const key = r.name();
    const vlen = r.u32();
    bundle.metadata.set(key, new TextDecoder('utf-8', { fatal: true }).decode(r.take(vlen)));
  }
  if (!r.done()) {
    throw new ExporterError(`${r.remaining()} trailing bytes after bundle content`);
  }
  return bundle;
}

/** View an fp32 tensor's payload as numbers (little-endian). */
export function float32Values(t: TensorRecord): Float32Array {
  if (t.dtype !== 'fp32') throw new ExporterError(`tensor ${t.name} is not fp32`);
  const out = new Float32Array(t.payload.byteLength / 4);
  const view = new DataView(t.payload.buffer, t.payload.byteOffset, t.payload.byteLength);
  for (let i = 0; i < out.length; i += 1) out[i] = view.getFloat32(4 * i, true);
  return out;
}

/** Raw little-endian bytes of a Float32Array, suitable as an fp32 payload. */
export function float32Payload(values: Float32Array): Uint8Array {
  const out = new Uint8Array(4 * values.length);
  const view = new DataView(out.buffer);
  for (let i = 0; i < values.length; i += 1) view.setFloat32(4 * i, values[i]!, true);
  return out;
}
