/** Thin typed wrapper around the agent's JSON API. */

export interface FeedItem {
  id: string;
  topic: string;
  url: string;
  snippet: string;
  bindings: Record<string, string>;
  image: string | null;
  at: number;
  personal: number;
  social: number;
  checked: boolean;
}

export interface TopicDoc {
  name: string;
  pattern: string;
  urls: string[];
  period: number;
  constraints?: Record<string, unknown>;
  enabled?: boolean;
}

export interface FeedbackResult {
  user: string;
  finding: string;
  polarity: number;
  weights: Record<string, number>;
}

export interface MinedPattern {
  pattern: string;
  support: number;
}

export class ApiError extends Error {
  status: number;
  /** Character offset of a pattern syntax error, when the server reports one. */
  position: number | null;
  /** Topic name the error belongs to, for topic-list submissions. */
  topic: string | null;

  constructor(status: number, message: string, position: number | null = null, topic: string | null = null) {
    super(message);
    this.status = status;
    this.position = position;
    this.topic = topic;
  }
}

export interface ApiClient {
  getFeed(user: string): Promise<FeedItem[]>;
  getTopics(user: string): Promise<TopicDoc[]>;
  putTopics(user: string, topics: TopicDoc[]): Promise<TopicDoc[]>;
  postFeedback(user: string, finding: string, polarity: number): Promise<FeedbackResult>;
  getMined(user: string, minSupport: number): Promise<MinedPattern[]>;
}

async function parseError(resp: Response): Promise<ApiError> {
  let message = `request failed: ${resp.status}`;
  let position: number | null = null;
  let topic: string | null = null;
  try {
    const body = await resp.json();
    if (typeof body.error === "string") message = body.error;
    else if (typeof body.detail === "string") message = body.detail;
    if (typeof body.position === "number") position = body.position;
    if (typeof body.topic === "string") topic = body.topic;
  } catch {
    // non-JSON body, keep the status message
  }
  return new ApiError(resp.status, message, position, topic);
}

export function createClient(base = "", token: string | null = null): ApiClient {
  const headers: Record<string, string> = { "Content-Type": "application/json" };
  if (token) headers["Authorization"] = `Bearer ${token}`;

  async function request(path: string, init?: RequestInit): Promise<any> {
    const resp = await fetch(base + path, { headers, ...init });
    if (!resp.ok) throw await parseError(resp);
    return resp.json();
  }

  return {
    async getFeed(user: string): Promise<FeedItem[]> {
      const body = await request(`/api/feed?user=${encodeURIComponent(user)}`);
      return body.items;
    },

    async getTopics(user: string): Promise<TopicDoc[]> {
      const body = await request(`/api/topics?user=${encodeURIComponent(user)}`);
      return body.topics;
    },

    async putTopics(user: string, topics: TopicDoc[]): Promise<TopicDoc[]> {
      const body = await request("/api/topics", {
        method: "PUT",
        body: JSON.stringify({ user, topics }),
      });
      return body.topics;
    },

    async postFeedback(user: string, finding: string, polarity: number): Promise<FeedbackResult> {
      return request("/api/feedback", {
        method: "POST",
        body: JSON.stringify({ user, finding, polarity }),
      });
    },

    async getMined(user: string, minSupport: number): Promise<MinedPattern[]> {
      const body = await request(`/api/patterns/mined?user=${encodeURIComponent(user)}&min_support=${minSupport}`);
      return body.candidates;
    },
  };
}
