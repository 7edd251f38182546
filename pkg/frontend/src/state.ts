/** What-if form view model: which actions are offered for a given regime
 * and which submissions are rejected before they reach the service. */

import type { WhatIfRequest } from "./api.js";

export const USER_SHIFT_CHOICES = [200, 400, 600] as const;

export interface FormState {
  modelId: string;
  fromUsers: number;
  fromPods: number;
  action: string;
}

/** Actions offered for the current pod count. Scaling below one pod is not
 * a real transition, so pods-1 is withheld at pods <= 1. */
export function availableActions(fromPods: number): string[] {
  const actions = ["pods+1"];
  if (fromPods > 1) actions.push("pods-1");
  for (const users of USER_SHIFT_CHOICES) actions.push(`users:${users}`);
  return actions;
}

/** Returns a human-readable rejection, or null when the form may be sent. */
export function validate(form: FormState): string | null {
  if (!form.modelId) return "select a model";
  if (!Number.isInteger(form.fromUsers) || form.fromUsers < 0) {
    return "users must be a nonnegative integer";
  }
  if (!Number.isInteger(form.fromPods) || form.fromPods < 1) {
    return "pods must be a positive integer";
  }
  if (form.action === "pods-1" && form.fromPods <= 1) {
    return "cannot scale below one pod";
  }
  if (!availableActions(form.fromPods).includes(form.action)) {
    return `unknown action ${form.action}`;
  }
  return null;
}

export function toRequest(form: FormState): WhatIfRequest {
  const rejection = validate(form);
  if (rejection !== null) throw new Error(rejection);
  return {
    model_id: form.modelId,
    from_users: form.fromUsers,
    from_pods: form.fromPods,
    action: form.action,
  };
}
