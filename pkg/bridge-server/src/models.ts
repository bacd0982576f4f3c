/**
 * Loopback models for protocol verification.  A model receives the raw
 * f32le payload plus the request body and returns the response payload of
 * the same length.  Real model adapters implement the same interface.
 */

export interface DenoiseModel {
  readonly name: string;
  readonly deterministic: boolean;
  denoise(payload: Buffer, body: Record<string, unknown>): Buffer;
}

class ZeroModel implements DenoiseModel {
  readonly name = "zero";
  readonly deterministic = true;

  denoise(payload: Buffer): Buffer {
    return Buffer.alloc(payload.length);
  }
}

class EchoModel implements DenoiseModel {
  readonly name = "echo";
  readonly deterministic = true;

  denoise(payload: Buffer): Buffer {
    return Buffer.from(payload);
  }
}

const REGISTRY: Record<string, () => DenoiseModel> = {
  zero: () => new ZeroModel(),
  echo: () => new EchoModel(),
};

export function loadModel(name: string): DenoiseModel {
  const factory = REGISTRY[name];
  if (!factory) {
    throw new Error(
      `unknown model ${JSON.stringify(name)}; available: ${Object.keys(REGISTRY).join(", ")}`,
    );
  }
  return factory();
}

export const MODEL_NAMES = Object.keys(REGISTRY);
