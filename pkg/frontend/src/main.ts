import { startStudio } from "./studio.js";

startStudio().catch((err) => {
  const status = document.getElementById("status");
  if (status) status.textContent = `service unavailable: ${err}`;
});
