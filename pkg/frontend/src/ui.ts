import { ChatStore } from "./store.js";
import {
  LAMBDA_MAX,
  LAMBDA_MIN,
  LAMBDA_STEP,
  RHO_MAX,
  RHO_MIN,
  RHO_STEP,
  modelTurnText,
} from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function initUi(store: ChatStore): void {
  const transcriptBox = el<HTMLDivElement>("transcript");
  const input = el<HTMLInputElement>("user-input");
  const sendButton = el<HTMLButtonElement>("send");
  const regenButton = el<HTMLButtonElement>("regenerate");
  const banner = el<HTMLDivElement>("error-banner");
  const rhoSlider = el<HTMLInputElement>("rho");
  const rhoValue = el<HTMLSpanElement>("rho-value");
  const lambdaSlider = el<HTMLInputElement>("lambda");
  const lambdaValue = el<HTMLSpanElement>("lambda-value");
  const direction = el<HTMLInputElement>("direction");
  const showCandidates = el<HTMLInputElement>("show-candidates");
  const candidatesBox = el<HTMLDivElement>("candidates");

  rhoSlider.min = String(RHO_MIN);
  rhoSlider.max = String(RHO_MAX);
  rhoSlider.step = String(RHO_STEP);
  rhoSlider.value = String(store.controls.rho);
  lambdaSlider.min = String(LAMBDA_MIN);
  lambdaSlider.max = String(LAMBDA_MAX);
  lambdaSlider.step = String(LAMBDA_STEP);
  lambdaSlider.value = String(store.controls.lambda);

  rhoSlider.addEventListener("input", () => {
    store.setControls({ rho: Number(rhoSlider.value) });
  });
  lambdaSlider.addEventListener("input", () => {
    store.setControls({ lambda: Number(lambdaSlider.value) });
  });
  direction.addEventListener("input", () => {
    store.setControls({ directionSentence: direction.value });
  });
  showCandidates.addEventListener("change", () => {
    store.setControls({ showCandidates: showCandidates.checked });
  });

  sendButton.addEventListener("click", () => {
    void store.sendTurn(input.value).then((sent) => {
      if (sent) input.value = "";
    });
  });
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") sendButton.click();
  });
  regenButton.addEventListener("click", () => {
    void store.regenerateLast();
  });

  function renderCandidates(): void {
    candidatesBox.innerHTML = "";
    const turn = store.lastModelTurn();
    if (!store.controls.showCandidates || turn === null) {
      candidatesBox.hidden = true;
      return;
    }
    candidatesBox.hidden = false;
    const revision = turn.revisions[turn.revisions.length - 1];
    const table = document.createElement("table");
    const head = document.createElement("tr");
    for (const label of ["text", "relevance", "style", "score"]) {
      const th = document.createElement("th");
      th.textContent = label;
      head.appendChild(th);
    }
    table.appendChild(head);
    // exact service order; values verbatim from the response
    for (const candidate of revision.response.candidates) {
      const row = document.createElement("tr");
      for (const value of [
        candidate.text,
        candidate.relevance.toFixed(4),
        candidate.style_prob.toFixed(4),
        candidate.score.toFixed(4),
      ]) {
        const td = document.createElement("td");
        td.textContent = value;
        row.appendChild(td);
      }
      table.appendChild(row);
    }
    candidatesBox.appendChild(table);
  }

  function render(): void {
    transcriptBox.innerHTML = "";
    for (const turn of store.transcript) {
      const line = document.createElement("div");
      line.className = `turn ${turn.speaker}`;
      if (turn.speaker === "user") {
        line.textContent = `you: ${turn.text}`;
      } else {
        const revision = turn.revisions[turn.revisions.length - 1];
        line.textContent = `model: ${modelTurnText(turn)}  (rho=${revision.controls.rho.toFixed(
          2,
        )}, lambda=${revision.controls.lambda.toFixed(2)})`;
      }
      transcriptBox.appendChild(line);
    }
    banner.hidden = store.errorBanner === null;
    banner.textContent = store.errorBanner ?? "";
    sendButton.disabled = store.isInFlight;
    regenButton.disabled = store.isInFlight || store.lastModelTurn() === null;
    rhoValue.textContent = store.controls.rho.toFixed(2);
    lambdaValue.textContent = store.controls.lambda.toFixed(2);
    renderCandidates();
    transcriptBox.scrollTop = transcriptBox.scrollHeight;
  }

  store.subscribe(render);
  render();
}
