// Numeric display helpers. The adherence estimate must render exactly the
// server's decimal text, so the significant-digit formatter mirrors the
// server's printf-style %g formatting.

function trimFraction(text: string): string {
  if (!text.includes(".")) return text;
  return text.replace(/0+$/, "").replace(/\.$/, "");
}

export function formatSignificant(value: number, digits = 12): string {
  if (!Number.isFinite(value)) return String(value);
  if (value === 0) return "0";
  const [mantissa, expText] = value.toExponential(digits - 1).split("e");
  const exp = parseInt(expText, 10);
  if (exp < -4 || exp >= digits) {
    const sign = exp < 0 ? "-" : "+";
    const abs = Math.abs(exp);
    const padded = abs < 10 ? `0${abs}` : String(abs);
    return `${trimFraction(mantissa)}e${sign}${padded}`;
  }
  return trimFraction(value.toFixed(Math.max(0, digits - 1 - exp)));
}

export function formatValue(value: number): string {
  return formatSignificant(value, 6);
}
