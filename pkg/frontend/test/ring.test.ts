import { describe, expect, it } from 'vitest';
import { Ring } from '../src/ring.js';

describe('ring buffer', () => {
  it('stays bounded and keeps newest items', () => {
    const ring = new Ring<number>(3);
    for (let i = 0; i < 10; i++) ring.push(i);
    expect(ring.length).toBe(3);
    expect(ring.toArray()).toEqual([7, 8, 9]);
    expect(ring.last()).toBe(9);
  });

  it('returns oldest-first before wrap', () => {
    const ring = new Ring<string>(4);
    ring.push('a');
    ring.push('b');
    expect(ring.toArray()).toEqual(['a', 'b']);
    expect(ring.last()).toBe('b');
  });

  it('clear empties the buffer', () => {
    const ring = new Ring<number>(2);
    ring.push(1);
    ring.clear();
    expect(ring.length).toBe(0);
    expect(ring.last()).toBeUndefined();
  });

  it('rejects non-positive capacity', () => {
    expect(() => new Ring(0)).toThrow();
  });
});
