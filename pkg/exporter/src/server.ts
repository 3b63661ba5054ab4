/**
 * HTTP embedding service.
 *
 * POST /embed {"texts": [str]} -> {"embeddings": [[float]]} in input order;
 * GET /healthz -> 200 "ok". Malformed bodies get 422. Forward passes run
 * sequentially, so responses are deterministic and order-preserving.
 */

import express, { type Express } from "express";
import { z } from "zod";

import type { EmbeddingModel } from "./mock.js";
import { defaultTemplate, fill } from "./templates.js";

const EmbedRequest = z.object({
  texts: z.array(z.string()).min(1),
});

export function createApp(model: EmbeddingModel): Express {
  const app = express();
  app.use(express.json({ limit: "16mb" }));
  const template = defaultTemplate("text");

  app.get("/healthz", (_req, res) => {
    res.status(200).send("ok");
  });

  app.post("/embed", (req, res) => {
    const parsed = EmbedRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(422).json({ error: "expected {\"texts\": [str, ...]}" });
      return;
    }
    const embeddings = parsed.data.texts.map((text) =>
      Array.from(model.embed(fill(template, { sent: text }))),
    );
    res.json({ embeddings });
  });

  // Body-parser JSON errors surface as 422s, not opaque 400s.
  app.use((err: Error, _req: express.Request, res: express.Response,
           next: express.NextFunction) => {
    if (err instanceof SyntaxError) {
      res.status(422).json({ error: "malformed JSON body" });
      return;
    }
    next(err);
  });

  return app;
}

export function serve(model: EmbeddingModel, port: number): Promise<number> {
  const app = createApp(model);
  return new Promise((resolve, reject) => {
    const server = app.listen(port, () => {
      const address = server.address();
      if (address && typeof address === "object") {
        console.error(`embedding service on port ${address.port} (model=${model.id}, dim=${model.dim})`);
        resolve(address.port);
      } else {
        reject(new Error("failed to determine listen port"));
      }
    });
    server.on("error", reject);
  });
}
