// Workbench state machine. Holds the last payload fetched from the service
// and derives everything shown on screen from it; never computes structural
// data locally. At most one mutating request is in flight at a time.

import { ApiClient, ApiError, CellRequest, StatePayload, StepLogPayload,
         SurfacePayload } from './api';
import { MalformedPayload, SceneModel, buildScene, memberKey,
         nearestSurfacePoint } from './scene';

export interface PreviewSummary {
  log: StepLogPayload | null;
  dimBefore: number | null;
  dimAfter: number | null;
  strutDelta: number | null;
  cableDelta: number | null;
}

export interface WorkbenchView {
  scene: SceneModel | null;
  previewScene: SceneModel | null;
  preview: PreviewSummary | null;
  state: StatePayload | null;
  busy: boolean;
  error: string | null;
  selectedNodes: string[];
  selectedMembers: [string, string][];
  surface: SurfacePayload | null;
  pendingPlacement: { node: string; point: [number, number, number] } | null;
  sessionId: string | null;
}

type Listener = (view: WorkbenchView) => void;

function countRoles(state: StatePayload): { struts: number; cables: number } | null {
  if (!state.typology) return null;
  const values = Object.values(state.typology);
  return {
    struts: values.filter((v) => v === 'strut').length,
    cables: values.filter((v) => v === 'cable').length,
  };
}

export class WorkbenchController {
  private state: StatePayload | null = null;
  private previewState: StatePayload | null = null;
  private previewLog: StepLogPayload | null = null;
  private surface: SurfacePayload | null = null;
  private pendingPlacement: { node: string; point: [number, number, number] } | null = null;
  private selectedNodes = new Set<string>();
  private selectedMembers = new Map<string, [string, string]>();
  private busy = false;
  private error: string | null = null;
  private listeners: Listener[] = [];

  sessionId: string | null = null;

  constructor(readonly api: ApiClient) {}

  onChange(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    const view = this.view();
    for (const fn of this.listeners) fn(view);
  }

  view(): WorkbenchView {
    let scene: SceneModel | null = null;
    let previewScene: SceneModel | null = null;
    try {
      scene = this.state ? buildScene(this.state, {
        selectedNodes: this.selectedNodes,
        selectedMembers: new Set(this.selectedMembers.keys()),
        surfacePoints: this.surface?.samples ?? [],
      }) : null;
      previewScene = this.previewState
        ? buildScene(this.previewState, { preview: true }) : null;
    } catch (err) {
      if (err instanceof MalformedPayload) {
        // keep the old scene; surface the problem in the banner
        scene = null;
        this.error = err.message;
      } else {
        throw err;
      }
    }
    let preview: PreviewSummary | null = null;
    if (this.previewState) {
      const before = this.state?.counts?.dim_w ?? null;
      const after = this.previewState.counts?.dim_w ?? null;
      const rolesBefore = this.state ? countRoles(this.state) : null;
      const rolesAfter = countRoles(this.previewState);
      preview = {
        log: this.previewLog,
        dimBefore: before,
        dimAfter: after,
        strutDelta: rolesBefore && rolesAfter ? rolesAfter.struts - rolesBefore.struts : null,
        cableDelta: rolesBefore && rolesAfter ? rolesAfter.cables - rolesBefore.cables : null,
      };
    }
    return {
      scene,
      previewScene,
      preview,
      state: this.state,
      busy: this.busy,
      error: this.error,
      selectedNodes: [...this.selectedNodes],
      selectedMembers: [...this.selectedMembers.values()],
      surface: this.surface,
      pendingPlacement: this.pendingPlacement,
      sessionId: this.sessionId,
    };
  }

  // -- selection ------------------------------------------------------------
  toggleNode(id: string): void {
    if (this.selectedNodes.has(id)) this.selectedNodes.delete(id);
    else this.selectedNodes.add(id);
    this.emit();
  }

  toggleMember(a: string, b: string): void {
    const key = memberKey(a, b);
    if (this.selectedMembers.has(key)) this.selectedMembers.delete(key);
    else this.selectedMembers.set(key, [a, b]);
    this.emit();
  }

  clearSelection(): void {
    this.selectedNodes.clear();
    this.selectedMembers.clear();
    this.emit();
  }

  // -- service-backed operations ---------------------------------------------
  private async mutate<T>(fn: () => Promise<T>): Promise<T | null> {
    if (this.busy) return null;  // buttons should be disabled; belt and braces
    this.busy = true;
    this.error = null;
    this.emit();
    try {
      return await fn();
    } catch (err) {
      this.error = err instanceof ApiError
        ? `${err.body.code}: ${err.body.message}` : String(err);
      return null;
    } finally {
      this.busy = false;
      this.emit();
    }
  }

  async createSession(script?: string): Promise<void> {
    await this.mutate(async () => {
      this.sessionId = await this.api.createSession(script ? { script } : undefined);
      this.state = await this.api.getState(this.sessionId);
      this.previewState = null;
      this.surface = null;
    });
  }

  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    await this.mutate(async () => {
      this.state = await this.api.getState(this.sessionId!);
    });
  }

  async seedCell(cell: CellRequest): Promise<void> {
    if (!this.sessionId) return;
    await this.mutate(async () => {
      const resp = await this.api.seed(this.sessionId!, cell);
      this.state = resp.state;
      this.previewState = null;
    });
  }

  async adhereCell(cell: CellRequest): Promise<void> {
    if (!this.sessionId) return;
    await this.mutate(async () => {
      const resp = await this.api.adhere(this.sessionId!, cell);
      this.state = resp.state;
      this.previewState = null;
      this.pendingPlacement = null;
      this.clearSelectionQuiet();
    });
  }

  async previewAdhere(cell: CellRequest): Promise<void> {
    if (!this.sessionId) return;
    await this.mutate(async () => {
      const resp = await this.api.previewAdhere(this.sessionId!, cell);
      this.previewState = resp.state;
      this.previewLog = resp.log;
    });
  }

  async previewFuseSelected(): Promise<void> {
    if (!this.sessionId || this.selectedMembers.size === 0) return;
    const members = [...this.selectedMembers.values()];
    await this.mutate(async () => {
      const resp = await this.api.previewFuse(this.sessionId!, members);
      this.previewState = resp.state;
      this.previewLog = resp.log;
    });
  }

  async commitFuseSelected(): Promise<void> {
    if (!this.sessionId || this.selectedMembers.size === 0) return;
    const members = [...this.selectedMembers.values()];
    await this.mutate(async () => {
      const resp = await this.api.fuse(this.sessionId!, members);
      this.state = resp.state;
      this.previewState = null;
      this.clearSelectionQuiet();
    });
  }

  dismissPreview(): void {
    this.previewState = null;
    this.previewLog = null;
    this.emit();
  }

  async requestSurface(fix?: string): Promise<void> {
    if (!this.sessionId || this.selectedMembers.size !== 2) return;
    const members = [...this.selectedMembers.values()];
    await this.mutate(async () => {
      this.surface = await this.api.placementSurface(this.sessionId!, members, fix);
    });
  }

  /** Snap a picked point to the nearest surface sample (spec: picking snaps). */
  pickPlacement(node: string, target: [number, number, number]): void {
    if (!this.surface || this.surface.samples.length === 0) return;
    const snapped = nearestSurfacePoint(this.surface.samples, target);
    if (snapped) {
      this.pendingPlacement = { node, point: snapped };
      this.emit();
    }
  }

  async confirmPlacement(): Promise<boolean> {
    if (!this.sessionId || !this.pendingPlacement) return false;
    const { node, point } = this.pendingPlacement;
    const ok = await this.mutate(async () => {
      await this.api.place(this.sessionId!, node, point);
      return true;
    });
    if (ok) this.pendingPlacement = null;
    this.emit();
    return ok === true;
  }

  async undo(): Promise<void> {
    if (!this.sessionId) return;
    await this.mutate(async () => {
      const resp = await this.api.undo(this.sessionId!);
      this.state = resp.state;
      this.previewState = null;
    });
  }

  async redo(): Promise<void> {
    if (!this.sessionId) return;
    await this.mutate(async () => {
      const resp = await this.api.redo(this.sessionId!);
      this.state = resp.state;
      this.previewState = null;
    });
  }

  async exportStructure(format: 'structure' | 'obj'): Promise<string | null> {
    if (!this.sessionId) return null;
    return this.mutate(() => this.api.exportText(this.sessionId!, format));
  }

  private clearSelectionQuiet(): void {
    this.selectedNodes.clear();
    this.selectedMembers.clear();
  }
}
