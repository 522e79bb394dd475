import { ApiClient } from "./api.js";
import { ChatStore } from "./store.js";
import { initUi } from "./ui.js";

declare global {
  interface Window {
    STYLEDIAL_API_URL?: string;
  }
}

const baseUrl = window.STYLEDIAL_API_URL ?? "http://127.0.0.1:8000";
const store = new ChatStore(new ApiClient(baseUrl));
initUi(store);
