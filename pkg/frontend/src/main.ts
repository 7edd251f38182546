/** Console wiring: load models, keep the action list consistent with the
 * pod count, submit what-if requests, and render service responses. */

import { ApiClient, ApiError } from "./api.js";
import {
  renderActionOptions,
  renderError,
  renderHealth,
  renderModelOptions,
  renderReport,
} from "./render.js";
import { availableActions, toRequest, validate } from "./state.js";

const api = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function readForm() {
  return {
    modelId: el<HTMLSelectElement>("model").value,
    fromUsers: Number(el<HTMLInputElement>("from-users").value),
    fromPods: Number(el<HTMLInputElement>("from-pods").value),
    action: el<HTMLSelectElement>("action").value,
  };
}

function refreshActions(): void {
  const pods = Number(el<HTMLInputElement>("from-pods").value);
  const select = el<HTMLSelectElement>("action");
  const previous = select.value;
  const actions = availableActions(Number.isInteger(pods) && pods >= 1 ? pods : 1);
  select.innerHTML = renderActionOptions(actions);
  select.value = actions.includes(previous) ? previous : actions[0];
  const rejection = validate(readForm());
  el<HTMLButtonElement>("run").disabled = rejection !== null;
  el<HTMLElement>("form-note").textContent = rejection ?? "";
}

async function submit(): Promise<void> {
  const output = el<HTMLElement>("output");
  try {
    const report = await api.runWhatIf(toRequest(readForm()));
    output.innerHTML = renderReport(report);
  } catch (err) {
    if (err instanceof ApiError) {
      output.innerHTML = renderError(
        err.code ? `${err.code}: ${err.message}` : err.message,
      );
    } else {
      output.innerHTML = renderError(String(err));
    }
  }
}

async function init(): Promise<void> {
  el<HTMLElement>("health").innerHTML = renderHealth(await api.health());
  const models = await api.listModels();
  el<HTMLSelectElement>("model").innerHTML = renderModelOptions(models);
  refreshActions();
  el<HTMLInputElement>("from-pods").addEventListener("input", refreshActions);
  el<HTMLInputElement>("from-users").addEventListener("input", refreshActions);
  el<HTMLSelectElement>("model").addEventListener("change", refreshActions);
  el<HTMLButtonElement>("run").addEventListener("click", (event) => {
    event.preventDefault();
    void submit();
  });
}

void init().catch((err) => {
  el<HTMLElement>("output").innerHTML = renderError(String(err));
});
