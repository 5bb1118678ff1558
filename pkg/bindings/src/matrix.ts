/**
 * CSOTMAT1 wire format and matrix views.
 *
 * Layout: 8 magic bytes "CSOTMAT1", rows and cols as little-endian uint64,
 * then rows*cols IEEE-754 float64 values, row-major, little-endian.
 */

import { endianness } from "node:os";

export const MAGIC = Buffer.from("CSOTMAT1", "ascii");
export const HEADER_BYTES = 24;

const LITTLE_ENDIAN = endianness() === "LE";

export class MatrixFormatError extends Error {
  readonly code = "E_IO";
}

/**
 * A typed view over a row-major float64 buffer. Never owns more than it was
 * given: constructing from caller data keeps the caller's buffer (no copy,
 * no mutation); decoding marks whether the payload could be viewed in place.
 */
export class BoundMatrixView {
  constructor(
    readonly rows: number,
    readonly cols: number,
    readonly data: Float64Array,
    /** true when `data` aliases the source buffer instead of a copy */
    readonly zeroCopy: boolean = false,
  ) {
    if (!Number.isInteger(rows) || !Number.isInteger(cols) || rows < 1 || cols < 1) {
      throw new MatrixFormatError(`bad matrix shape ${rows}x${cols}`);
    }
    if (data.length !== rows * cols) {
      throw new MatrixFormatError(
        `buffer holds ${data.length} values, expected ${rows * cols}`,
      );
    }
  }

  static fromArray(rows: number, cols: number, data: Float64Array): BoundMatrixView {
    return new BoundMatrixView(rows, cols, data, true);
  }

  at(i: number, j: number): number {
    return this.data[i * this.cols + j]!;
  }
}

/** Serialize a view into a fresh wire buffer. */
export function encodeMatrix(view: BoundMatrixView): Buffer {
  const out = Buffer.allocUnsafe(HEADER_BYTES + 8 * view.data.length);
  MAGIC.copy(out, 0);
  out.writeBigUInt64LE(BigInt(view.rows), 8);
  out.writeBigUInt64LE(BigInt(view.cols), 16);
  if (LITTLE_ENDIAN) {
    Buffer.from(view.data.buffer, view.data.byteOffset, view.data.byteLength).copy(
      out,
      HEADER_BYTES,
    );
  } else {
    for (let i = 0; i < view.data.length; i++) {
      out.writeDoubleLE(view.data[i]!, HEADER_BYTES + 8 * i);
    }
  }
  return out;
}

/**
 * Parse a wire buffer. The float64 payload is viewed in place when the
 * platform is little-endian and the payload lands 8-byte aligned; otherwise
 * it is copied into a fresh array.
 */
export function decodeMatrix(blob: Buffer): BoundMatrixView {
  if (blob.length < HEADER_BYTES || !blob.subarray(0, 8).equals(MAGIC)) {
    throw new MatrixFormatError("bad magic bytes, expected CSOTMAT1");
  }
  const rows = Number(blob.readBigUInt64LE(8));
  const cols = Number(blob.readBigUInt64LE(16));
  if (rows < 1 || cols < 1 || !Number.isSafeInteger(rows * cols)) {
    throw new MatrixFormatError(`bad matrix shape ${rows}x${cols}`);
  }
  const expected = HEADER_BYTES + 8 * rows * cols;
  if (blob.length !== expected) {
    throw new MatrixFormatError(
      `truncated payload: expected ${expected} bytes, got ${blob.length}`,
    );
  }
  const payloadOffset = blob.byteOffset + HEADER_BYTES;
  if (LITTLE_ENDIAN && payloadOffset % 8 === 0) {
    return new BoundMatrixView(
      rows,
      cols,
      new Float64Array(blob.buffer, payloadOffset, rows * cols),
      true,
    );
  }
  const data = new Float64Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = blob.readDoubleLE(HEADER_BYTES + 8 * i);
  }
  return new BoundMatrixView(rows, cols, data, false);
}

/** Headerless CSV with full round-trip precision, one matrix row per line. */
export function encodeCsvRow(values: ArrayLike<number>): string {
  const cells: string[] = [];
  for (let i = 0; i < values.length; i++) {
    cells.push(formatCell(values[i]!));
  }
  return cells.join(",") + "\n";
}

function formatCell(x: number): string {
  if (Number.isInteger(x) && Math.abs(x) < 1e15) return x.toString();
  return x.toPrecision(17);
}
