import { ApiClient, ApiError } from "./api.js";
import {
  ChatTurn,
  ControlState,
  GenerateRequest,
  ModelTurn,
  clampControls,
  defaultControls,
  modelTurnText,
} from "./types.js";

export const EOU_SEPARATOR = " <EOU> ";

export interface StoreOptions {
  contextTurns?: number; // how many trailing turns form the context (default 2)
  nCandidates?: number;
}

type Listener = () => void;

/**
 * Transcript and control state for the chat client.
 *
 * All numbers shown in the UI come verbatim from the service responses kept
 * on the model turns; at most one request is in flight at any time, and a
 * failed request leaves the transcript untouched (only the error banner
 * changes).
 */
export class ChatStore {
  readonly transcript: ChatTurn[] = [];
  controls: ControlState = defaultControls();
  errorBanner: string | null = null;
  private inFlight = false;
  private listeners: Listener[] = [];
  private api: ApiClient;
  private contextTurns: number;
  private nCandidates: number;

  constructor(api: ApiClient, options: StoreOptions = {}) {
    this.api = api;
    this.contextTurns = options.contextTurns ?? 2;
    this.nCandidates = options.nCandidates ?? 100;
  }

  get isInFlight(): boolean {
    return this.inFlight;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  setControls(update: Partial<ControlState>): void {
    this.controls = clampControls({ ...this.controls, ...update });
    this.notify();
  }

  /** Texts of the trailing turns, oldest first, with a pending user text last. */
  buildContext(pendingUserText?: string): string {
    const texts = this.transcript.map((turn) =>
      turn.speaker === "user" ? turn.text : modelTurnText(turn),
    );
    if (pendingUserText !== undefined) texts.push(pendingUserText);
    return texts.slice(-this.contextTurns).join(EOU_SEPARATOR);
  }

  private requestFor(context: string, controls: ControlState): GenerateRequest {
    const request: GenerateRequest = {
      context,
      rho: controls.rho,
      lambda: controls.lambda,
      n_candidates: this.nCandidates,
    };
    if (controls.directionSentence.trim() !== "") {
      request.direction_sentence = controls.directionSentence.trim();
    }
    if (controls.seed !== undefined) request.seed = controls.seed;
    return request;
  }

  /**
   * Send one user turn; on success the user turn and the top-1 model turn are
   * appended. Returns false when ignored (empty text or a request already in
   * flight); on service failure the transcript is unchanged and the error
   * banner is set.
   */
  async sendTurn(text: string): Promise<boolean> {
    const trimmed = text.trim();
    if (trimmed === "" || this.inFlight) return false;
    const context = this.buildContext(trimmed);
    const controls = { ...this.controls };
    this.inFlight = true;
    this.notify();
    try {
      const response = await this.api.generate(this.requestFor(context, controls));
      this.transcript.push({ speaker: "user", text: trimmed });
      this.transcript.push({
        speaker: "model",
        context,
        revisions: [{ controls, response }],
      });
      this.errorBanner = null;
      return true;
    } catch (err) {
      this.errorBanner = err instanceof ApiError ? err.message : String(err);
      return false;
    } finally {
      this.inFlight = false;
      this.notify();
    }
  }

  lastModelTurn(): ModelTurn | null {
    for (let i = this.transcript.length - 1; i >= 0; i--) {
      const turn = this.transcript[i];
      if (turn.speaker === "model") return turn;
    }
    return null;
  }

  /**
   * Redo the last model turn with the current controls and the same context;
   * the previous revisions stay in the turn history.
   */
  async regenerateLast(): Promise<boolean> {
    const turn = this.lastModelTurn();
    if (turn === null || this.inFlight) return false;
    const controls = { ...this.controls };
    this.inFlight = true;
    this.notify();
    try {
      const response = await this.api.generate(this.requestFor(turn.context, controls));
      turn.revisions.push({ controls, response });
      this.errorBanner = null;
      return true;
    } catch (err) {
      this.errorBanner = err instanceof ApiError ? err.message : String(err);
      return false;
    } finally {
      this.inFlight = false;
      this.notify();
    }
  }
}
