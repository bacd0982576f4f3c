/**
 * Wire protocol shared with the engine's bridge client.
 *
 * Frame layout:
 *   [ msg_type: u8 ][ json_len: u32 LE ][ payload_len: u64 LE ]
 *   [ json body: json_len bytes ][ payload: payload_len bytes ]
 *
 * Tensor payloads are raw little-endian float32, C order; for tensor
 * messages payload_len must equal prod(shape) * 4.
 */

export const PROTOCOL_VERSION = 1;

export const MSG_HELLO = 1;
export const MSG_DENOISE_REQ = 2;
export const MSG_DENOISE_RESP = 3;
export const MSG_ERROR = 4;
export const MSG_BYE = 5;

export const HEADER_SIZE = 1 + 4 + 8;

const KNOWN_TYPES = new Set([
  MSG_HELLO, MSG_DENOISE_REQ, MSG_DENOISE_RESP, MSG_ERROR, MSG_BYE,
]);

export interface Frame {
  msgType: number;
  body: Record<string, unknown>;
  payload: Buffer;
}

export function encodeFrame(
  msgType: number,
  body: Record<string, unknown>,
  payload: Buffer = Buffer.alloc(0),
): Buffer {
  const json = Buffer.from(JSON.stringify(body), "utf8");
  const header = Buffer.alloc(HEADER_SIZE);
  header.writeUInt8(msgType, 0);
  header.writeUInt32LE(json.length, 1);
  header.writeBigUInt64LE(BigInt(payload.length), 5);
  return Buffer.concat([header, json, payload]);
}

export class FrameFormatError extends Error {}

/**
 * Incremental frame parser: feed arbitrary chunks, pull complete frames.
 * Malformed input (unknown type, oversize header fields, bad JSON) throws
 * FrameFormatError; the connection should answer with ERROR and close.
 */
export class FrameParser {
  private pending: Buffer = Buffer.alloc(0);
  // guards against absurd allocations from corrupt headers
  constructor(private maxJson = 1 << 20, private maxPayload = 1 << 30) {}

  feed(chunk: Buffer): Frame[] {
    this.pending = this.pending.length
      ? Buffer.concat([this.pending, chunk])
      : chunk;
    const frames: Frame[] = [];
    for (;;) {
      const frame = this.tryParseOne();
      if (frame === null) break;
      frames.push(frame);
    }
    return frames;
  }

  private tryParseOne(): Frame | null {
    if (this.pending.length < HEADER_SIZE) return null;
    const msgType = this.pending.readUInt8(0);
    if (!KNOWN_TYPES.has(msgType)) {
      throw new FrameFormatError(`unknown message type ${msgType}`);
    }
    const jsonLen = this.pending.readUInt32LE(1);
    const payloadLenBig = this.pending.readBigUInt64LE(5);
    if (jsonLen > this.maxJson) {
      throw new FrameFormatError(`json length ${jsonLen} exceeds limit`);
    }
    if (payloadLenBig > BigInt(this.maxPayload)) {
      throw new FrameFormatError(`payload length ${payloadLenBig} exceeds limit`);
    }
    const payloadLen = Number(payloadLenBig);
    const total = HEADER_SIZE + jsonLen + payloadLen;
    if (this.pending.length < total) return null;
    const jsonBytes = this.pending.subarray(HEADER_SIZE, HEADER_SIZE + jsonLen);
    const payload = Buffer.from(
      this.pending.subarray(HEADER_SIZE + jsonLen, total),
    );
    this.pending = Buffer.from(this.pending.subarray(total));
    let body: Record<string, unknown> = {};
    if (jsonLen > 0) {
      try {
        body = JSON.parse(jsonBytes.toString("utf8"));
      } catch (e) {
        throw new FrameFormatError(`unparseable frame body: ${e}`);
      }
    }
    return { msgType, body, payload };
  }
}

export function shapeElements(shape: unknown): number {
  if (!Array.isArray(shape) || shape.length === 0) {
    throw new FrameFormatError(`bad shape ${JSON.stringify(shape)}`);
  }
  let n = 1;
  for (const dim of shape) {
    if (typeof dim !== "number" || !Number.isInteger(dim) || dim < 1) {
      throw new FrameFormatError(`bad shape dimension ${dim}`);
    }
    n *= dim;
  }
  return n;
}
