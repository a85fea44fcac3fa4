// Typed client for the tensecell session service. Every request is logged so
// tests can assert that displayed data only ever comes from service responses.

export interface Counts {
  nodes: number;
  members: number;
  laman_bound: number;
  rank_a: number;
  dim_w: number;
  mechanisms: number;
  dof: number;
  dof_small: number | null;
}

export interface MorphoCellPayload {
  id: string;
  kind: 'regular' | 'virtual' | 'fused';
  live: boolean;
  nodes: string[];
  edges: string[];
}

export interface StatePayload {
  nodes: Record<string, [number, number, number]>;
  members: [string, string][];
  basis: number[][];
  column_cells: string[];
  typology: Record<string, string> | null;
  counts: Counts | null;
  morpho: { cells: MorphoCellPayload[]; adjacency: unknown[] } | null;
}

export interface StepLogPayload {
  kind: string;
  detail: string;
  delta_edges: number;
  delta_nodes: number;
  corollary_delta: number;
  predicted_delta: number;
  observed_delta: number;
  cells_created: [string, string][];
  basis_note: string;
}

export interface StepResponse {
  state: StatePayload;
  log: StepLogPayload | null;
}

export interface SurfacePayload {
  kind: 'plane' | 'quadric' | 'bilinear';
  matrix: number[][] | number[];
  samples: [number, number, number][];
  note?: string;
}

export interface CellRequest {
  nodes: string[];
  shared?: string[];
  coords?: Record<string, [number, number, number]>;
  anchor: [string, string];
  value?: number;
}

export interface ServiceError {
  code: string;
  message: string;
  detail: unknown;
}

export class ApiError extends Error {
  constructor(public status: number, public body: ServiceError) {
    super(body.message);
  }
}

export interface RequestLogEntry {
  method: 'GET' | 'POST';
  path: string;
}

export class ApiClient {
  readonly log: RequestLogEntry[] = [];

  constructor(private baseUrl: string) {}

  private async call<T>(method: 'GET' | 'POST', path: string, body?: unknown): Promise<T> {
    this.log.push({ method, path });
    const resp = await fetch(this.baseUrl + path, {
      method,
      headers: body !== undefined ? { 'Content-Type': 'application/json' } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const text = await resp.text();
    if (!resp.ok) {
      let parsed: ServiceError;
      try {
        parsed = JSON.parse(text) as ServiceError;
      } catch {
        parsed = { code: 'http', message: text || resp.statusText, detail: null };
      }
      throw new ApiError(resp.status, parsed);
    }
    return JSON.parse(text) as T;
  }

  async createSession(body?: { script?: string; structure?: string }): Promise<string> {
    const resp = await this.call<{ id: string }>('POST', '/sessions', body ?? {});
    return resp.id;
  }

  getState(id: string): Promise<StatePayload> {
    return this.call('GET', `/sessions/${id}/state`);
  }

  seed(id: string, cell: CellRequest): Promise<StepResponse> {
    return this.call('POST', `/sessions/${id}/seed`, cell);
  }

  adhere(id: string, cell: CellRequest): Promise<StepResponse> {
    return this.call('POST', `/sessions/${id}/adhere`, cell);
  }

  fuse(id: string, members: [string, string][]): Promise<StepResponse> {
    return this.call('POST', `/sessions/${id}/fuse`, { members });
  }

  previewAdhere(id: string, cell: CellRequest): Promise<StepResponse> {
    return this.call('POST', `/sessions/${id}/preview`, { kind: 'adhere', ...cell });
  }

  previewFuse(id: string, members: [string, string][]): Promise<StepResponse> {
    return this.call('POST', `/sessions/${id}/preview`, { kind: 'fuse', members });
  }

  placementSurface(id: string, remove: [string, string][], fix?: string,
                   samples = 400): Promise<SurfacePayload> {
    const removeTok = remove.map(([a, b]) => `${a}:${b}`).join(',');
    const fixTok = fix ? `&fix=${encodeURIComponent(fix)}` : '';
    return this.call('GET',
      `/sessions/${id}/placement-surface?remove=${encodeURIComponent(removeTok)}` +
      `${fixTok}&samples=${samples}`);
  }

  place(id: string, node: string, point: [number, number, number]):
      Promise<{ node: string; point: number[]; residual: number }> {
    return this.call('POST', `/sessions/${id}/place`, { node, point });
  }

  undo(id: string): Promise<{ cursor: number; state: StatePayload }> {
    return this.call('POST', `/sessions/${id}/undo`, {});
  }

  redo(id: string): Promise<{ cursor: number; state: StatePayload }> {
    return this.call('POST', `/sessions/${id}/redo`, {});
  }

  async exportText(id: string, format: 'structure' | 'obj'): Promise<string> {
    this.log.push({ method: 'GET', path: `/sessions/${id}/export?format=${format}` });
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/export?format=${format}`);
    if (!resp.ok) {
      throw new ApiError(resp.status, { code: 'http', message: resp.statusText, detail: null });
    }
    return resp.text();
  }
}
