// Wire-format schemas for the service contract, used to validate every
// request body the UI can emit.

import { z } from "zod";

export const EMOTIONS = [
  "no-emotion",
  "anger",
  "disgust",
  "fear",
  "happiness",
  "sadness",
  "surprise",
] as const;

export const ACTS = ["inform", "question", "directive", "commissive"] as const;

export const TOPICS = [
  "ordinary-life",
  "school-life",
  "culture-education",
  "attitude-emotion",
  "relationship",
  "tourism",
  "health",
  "work",
  "politics",
  "finance",
] as const;

export const historyEntrySchema = z.strictObject({
  speaker: z.union([z.literal(1), z.literal(2)]),
  text: z.string().min(1),
  emotion: z.enum(EMOTIONS).optional(),
  act: z.enum(ACTS).optional(),
});

export const samplingSchema = z.strictObject({
  p: z.number().gt(0).lte(1),
  temperature: z.number().gt(0).lte(5),
  max_new_tokens: z.number().int().min(1).max(512),
  seed: z.number().int().optional(),
});

export const chatRequestSchema = z.strictObject({
  topic: z.enum(TOPICS),
  history: z.array(historyEntrySchema),
  sampling: samplingSchema,
  force_emotion: z.enum(EMOTIONS).optional(),
});

export const chatResponseSchema = z.strictObject({
  reply: z.string(),
  predicted_emotion: z.enum(EMOTIONS),
  emotion_scores: z.record(z.string(), z.number().gt(0).lt(1)),
  act_used: z.string(),
  token_count: z.number().int().min(0),
  model_hash: z.string(),
});

export const metaSchema = z.strictObject({
  emotions: z.array(z.string()).length(7),
  acts: z.array(z.string()).length(4),
  topics: z.array(z.string()).length(10),
  sampling_defaults: z.strictObject({
    p: z.number(),
    temperature: z.number(),
    max_new_tokens: z.number(),
  }),
  model_hash: z.string(),
  max_positions: z.number(),
});
