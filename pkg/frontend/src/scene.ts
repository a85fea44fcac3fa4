// Pure scene model derived from a service state payload. No rendering here:
// the model lists exactly what to draw, so tests can assert the rendered
// counts without a WebGL context, and the renderer stays a dumb projector.

import type { StatePayload } from './api';

export const STRUT_COLOR = '#c23b22';
export const CABLE_COLOR = '#1f77b4';
export const NEUTRAL_COLOR = '#888888';
export const VIRTUAL_COLOR = '#c9a227';

export const STRUT_RADIUS = 0.035;
export const CABLE_RADIUS = 0.012;

export interface SegmentModel {
  member: [string, string];
  from: [number, number, number];
  to: [number, number, number];
  role: 'strut' | 'cable' | 'unassigned';
  color: string;
  radius: number;
  preview: boolean;
  highlight: boolean;
}

export interface NodeModel {
  id: string;
  position: [number, number, number];
  selected: boolean;
}

export interface SceneModel {
  nodes: NodeModel[];
  segments: SegmentModel[];
  surfacePoints: [number, number, number][];
  strutCount: number;
  cableCount: number;
  preview: boolean;
}

export class MalformedPayload extends Error {}

function checkPayload(state: StatePayload): void {
  if (!state || typeof state.nodes !== 'object' || !Array.isArray(state.members)) {
    throw new MalformedPayload('state payload is missing nodes or members');
  }
  for (const [a, b] of state.members) {
    if (!(a in state.nodes) || !(b in state.nodes)) {
      throw new MalformedPayload(`member ${a}:${b} references unknown nodes`);
    }
  }
  for (const p of Object.values(state.nodes)) {
    if (!Array.isArray(p) || p.length !== 3 || p.some((v) => !Number.isFinite(v))) {
      throw new MalformedPayload('node coordinates must be finite triples');
    }
  }
}

export function memberKey(a: string, b: string): string {
  return a < b ? `${a}:${b}` : `${b}:${a}`;
}

export interface SceneOptions {
  selectedNodes?: Set<string>;
  selectedMembers?: Set<string>;
  highlightCell?: string[] | null;  // virtual-cell member keys to emphasize
  surfacePoints?: [number, number, number][];
  preview?: boolean;
}

export function buildScene(state: StatePayload, opts: SceneOptions = {}): SceneModel {
  checkPayload(state);
  const typology = state.typology ?? {};
  const highlight = new Set(opts.highlightCell ?? []);
  const selectedMembers = opts.selectedMembers ?? new Set<string>();
  const selectedNodes = opts.selectedNodes ?? new Set<string>();
  const segments: SegmentModel[] = state.members.map(([a, b]) => {
    const role0 = typology[`${a}:${b}`] ?? typology[`${b}:${a}`] ?? 'unassigned';
    const role = role0 === 'strut' || role0 === 'cable' ? role0 : 'unassigned';
    const color = role === 'strut' ? STRUT_COLOR
      : role === 'cable' ? CABLE_COLOR : NEUTRAL_COLOR;
    return {
      member: [a, b] as [string, string],
      from: state.nodes[a],
      to: state.nodes[b],
      role,
      color: highlight.has(memberKey(a, b)) ? VIRTUAL_COLOR : color,
      radius: role === 'strut' ? STRUT_RADIUS : CABLE_RADIUS,
      preview: opts.preview ?? false,
      highlight: selectedMembers.has(memberKey(a, b)),
    };
  });
  return {
    nodes: Object.entries(state.nodes).map(([id, position]) => ({
      id,
      position,
      selected: selectedNodes.has(id),
    })),
    segments,
    surfacePoints: opts.surfacePoints ?? [],
    strutCount: segments.filter((s) => s.role === 'strut').length,
    cableCount: segments.filter((s) => s.role === 'cable').length,
    preview: opts.preview ?? false,
  };
}

export function nearestSurfacePoint(
  samples: [number, number, number][],
  target: [number, number, number],
): [number, number, number] | null {
  let best: [number, number, number] | null = null;
  let bestDist = Infinity;
  for (const p of samples) {
    const d = (p[0] - target[0]) ** 2 + (p[1] - target[1]) ** 2 + (p[2] - target[2]) ** 2;
    if (d < bestDist) {
      bestDist = d;
      best = p;
    }
  }
  return best;
}
