import { describe, expect, it } from 'vitest';
import { encodeMessage, parseMessage } from '../src/protocol.js';

describe('protocol', () => {
  it('parses known server messages', () => {
    const msg = parseMessage(JSON.stringify({ type: 'error', message: 'nope' }));
    expect(msg).not.toBeNull();
    expect(msg!.type).toBe('error');
  });

  it('rejects malformed frames without throwing', () => {
    expect(parseMessage('{broken')).toBeNull();
    expect(parseMessage('42')).toBeNull();
    expect(parseMessage(JSON.stringify({ type: 'telepathy' }))).toBeNull();
    expect(parseMessage(JSON.stringify({ no_type: 1 }))).toBeNull();
  });

  it('encodes client messages as single-line JSON', () => {
    const text = encodeMessage({ type: 'set_conditioning', value: 2.5 });
    expect(JSON.parse(text)).toEqual({ type: 'set_conditioning', value: 2.5 });
    expect(text.includes('\n')).toBe(false);
  });
});
