/**
 * Session loop: HELLO handshake, then strictly sequential
 * DENOISE_REQ -> DENOISE_RESP until BYE.  Any framing damage or protocol
 * violation answers with an ERROR frame and closes the session; model
 * failures answer with ERROR (carrying the stack) and keep serving.
 */

import { DenoiseModel } from "./models";
import {
  Frame,
  FrameFormatError,
  FrameParser,
  MSG_BYE,
  MSG_DENOISE_REQ,
  MSG_DENOISE_RESP,
  MSG_ERROR,
  MSG_HELLO,
  PROTOCOL_VERSION,
  encodeFrame,
  shapeElements,
} from "./protocol";

export interface SessionOptions {
  maxElements?: number;
}

export const DEFAULT_MAX_ELEMENTS = 16 * 1024 * 1024;

export class Session {
  private parser = new FrameParser();
  private greeted = false;
  private closed = false;
  readonly maxElements: number;
  requestsServed = 0;

  constructor(
    private model: DenoiseModel,
    private write: (data: Buffer) => void,
    private onClose: () => void,
    options: SessionOptions = {},
  ) {
    this.maxElements = options.maxElements ?? DEFAULT_MAX_ELEMENTS;
  }

  get isClosed(): boolean {
    return this.closed;
  }

  feed(chunk: Buffer): void {
    if (this.closed) return;
    let frames: Frame[];
    try {
      frames = this.parser.feed(chunk);
    } catch (e) {
      if (e instanceof FrameFormatError) {
        this.fail("MALFORMED", e.message);
        return;
      }
      throw e;
    }
    for (const frame of frames) {
      this.handle(frame);
      if (this.closed) return;
    }
  }

  private fail(code: string, message: string, traceback?: string): void {
    this.write(encodeFrame(MSG_ERROR, { code, message, traceback }));
    this.close();
  }

  private close(): void {
    if (!this.closed) {
      this.closed = true;
      this.onClose();
    }
  }

  private handle(frame: Frame): void {
    switch (frame.msgType) {
      case MSG_HELLO:
        if (frame.body.version !== PROTOCOL_VERSION) {
          this.fail(
            "VERSION",
            `protocol version ${frame.body.version} unsupported; this server speaks ${PROTOCOL_VERSION}`,
          );
          return;
        }
        this.greeted = true;
        this.write(encodeFrame(MSG_HELLO, {
          version: PROTOCOL_VERSION,
          model: this.model.name,
          deterministic: this.model.deterministic,
          max_elements: this.maxElements,
        }));
        return;

      case MSG_DENOISE_REQ: {
        if (!this.greeted) {
          this.fail("PROTOCOL", "DENOISE_REQ before HELLO");
          return;
        }
        let elements: number;
        try {
          elements = shapeElements(frame.body.shape);
        } catch (e) {
          this.fail("MALFORMED", (e as Error).message);
          return;
        }
        if (frame.body.dtype !== "f32le") {
          this.fail("MALFORMED", `unsupported dtype ${frame.body.dtype}`);
          return;
        }
        if (elements > this.maxElements) {
          // recoverable: report the limit and keep the session open
          this.write(encodeFrame(MSG_ERROR, {
            code: "SHAPE",
            message: `${elements} elements exceeds limit ${this.maxElements}`,
          }));
          return;
        }
        if (frame.payload.length !== elements * 4) {
          this.fail(
            "MALFORMED",
            `payload has ${frame.payload.length} bytes, shape needs ${elements * 4}`,
          );
          return;
        }
        let out: Buffer;
        try {
          out = this.model.denoise(frame.payload, frame.body);
        } catch (e) {
          this.write(encodeFrame(MSG_ERROR, {
            code: "INTERNAL",
            message: String(e),
            traceback: (e as Error).stack ?? String(e),
          }));
          return;
        }
        this.requestsServed += 1;
        this.write(encodeFrame(MSG_DENOISE_RESP, {
          shape: frame.body.shape,
          dtype: "f32le",
          timestep: frame.body.timestep,
          clip_id: frame.body.clip_id,
        }, out));
        return;
      }

      case MSG_BYE:
        this.close();
        return;

      default:
        // client-only types arriving here are a protocol violation
        this.fail("PROTOCOL", `unexpected message type ${frame.msgType}`);
    }
  }
}
