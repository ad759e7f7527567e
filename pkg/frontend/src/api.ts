/** Typed client for the mechkb search service. */

export type RelationClass = "DIRECT" | "INDIRECT";

export interface ResultRow {
  score: number;
  /** Decimal string: relation ids are 64-bit and overflow JS numbers. */
  relation_id: string;
  arg1: string;
  arg2: string;
  class: RelationClass;
  confidence: number;
  sentence: string;
  title: string;
  url: string;
  doc_id: string;
  sentence_index: number;
}

export interface SearchResponse {
  results: ResultRow[];
  took_ms: number;
  total_scanned: number;
}

export interface HealthInfo {
  status: string;
  provider: string;
  index: {
    format_version: number;
    dim: number;
    built_at: string;
    counts: { relations: number; vocabulary: number };
  };
}

export interface SearchRequest {
  e1: string[];
  e2: string[];
  classFilter: RelationClass | null;
  k: number;
  symmetric: boolean;
  minConfidence: number;
  offset?: number;
}

interface ErrorBody {
  error?: { code?: string; message?: string; field?: string };
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly field: string | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string) => Promise<Response>;

export function buildSearchQuery(request: SearchRequest): URLSearchParams {
  const params = new URLSearchParams();
  for (const alt of request.e1) params.append("e1", alt);
  for (const alt of request.e2) params.append("e2", alt);
  if (request.classFilter) params.set("class", request.classFilter.toLowerCase());
  params.set("k", String(request.k));
  if (request.symmetric) params.set("symmetric", "true");
  params.set("min_confidence", String(request.minConfidence));
  if (request.offset) params.set("offset", String(request.offset));
  return params;
}

async function errorFrom(response: Response): Promise<ApiError> {
  let body: ErrorBody = {};
  try {
    body = (await response.json()) as ErrorBody;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  const detail = body.error ?? {};
  return new ApiError(
    response.status,
    detail.code ?? `http_${response.status}`,
    detail.message ?? response.statusText,
    detail.field ?? null,
  );
}

export class MechKbClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url) => fetch(url),
  ) {}

  async search(request: SearchRequest): Promise<SearchResponse> {
    const query = buildSearchQuery(request);
    const response = await this.fetchFn(`${this.baseUrl}/search?${query}`);
    if (!response.ok) throw await errorFrom(response);
    return (await response.json()) as SearchResponse;
  }

  async relation(relationId: string): Promise<ResultRow> {
    const response = await this.fetchFn(`${this.baseUrl}/relation/${relationId}`);
    if (!response.ok) throw await errorFrom(response);
    return (await response.json()) as ResultRow;
  }

  async health(): Promise<HealthInfo> {
    const response = await this.fetchFn(`${this.baseUrl}/health`);
    if (!response.ok) throw await errorFrom(response);
    return (await response.json()) as HealthInfo;
  }
}
