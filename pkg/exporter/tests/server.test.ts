import type { Server } from "node:http";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { MockModel } from "../src/mock.js";
import { createApp } from "../src/server.js";

let server: Server;
let base: string;

beforeAll(async () => {
  const app = createApp(new MockModel(9, 24));
  await new Promise<void>((resolve) => {
    server = app.listen(0, () => resolve());
  });
  const address = server.address();
  if (!address || typeof address !== "object") throw new Error("no port");
  base = `http://127.0.0.1:${address.port}`;
});

afterAll(() => {
  server.close();
});

describe("embedding service", () => {
  it("answers the health check", async () => {
    const res = await fetch(`${base}/healthz`);
    expect(res.status).toBe(200);
    expect(await res.text()).toBe("ok");
  });

  it("embeds a batch with one vector per text, equal lengths", async () => {
    const res = await fetch(`${base}/embed`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ texts: ["first text", "second text"] }),
    });
    expect(res.status).toBe(200);
    const { embeddings } = (await res.json()) as { embeddings: number[][] };
    expect(embeddings).toHaveLength(2);
    expect(embeddings[0]).toHaveLength(24);
    expect(embeddings[1]).toHaveLength(24);
  });

  it("is deterministic and order-preserving", async () => {
    const post = async (texts: string[]) => {
      const res = await fetch(`${base}/embed`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ texts }),
      });
      return ((await res.json()) as { embeddings: number[][] }).embeddings;
    };
    const batch = await post(["alpha", "beta", "alpha"]);
    expect(batch[0]).toEqual(batch[2]);
    expect(batch[0]).not.toEqual(batch[1]);
    const [alphaAlone] = await post(["alpha"]);
    const [betaAlone] = await post(["beta"]);
    expect(batch[0]).toEqual(alphaAlone);
    expect(batch[1]).toEqual(betaAlone);
  });

  it("rejects malformed bodies with 422", async () => {
    for (const body of ['{"texts": []}', '{"nope": 1}', "not json {"]) {
      const res = await fetch(`${base}/embed`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body,
      });
      expect(res.status).toBe(422);
    }
  });
});
