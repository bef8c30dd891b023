#!/usr/bin/env python3
"""Sizing compressed head branches from cluster class counts.

Shows the channel-compression arithmetic on the shipped head templates:
each branch keeps the template's layer structure but scales the channel
widths by (served classes / total classes). More branches means smaller
per-branch heads, which is where the dynamic cost savings come from.
"""

from ctxbranch import compress_template, compression_factor, packaged_template


def split_sizes(total: int, branches: int, common: int) -> list[int]:
    """Roughly even split of the non-common classes, plus the common ones
    replicated into every branch."""
    base = (total - common) // branches
    sizes = [base] * branches
    for i in range((total - common) % branches):
        sizes[i] += 1
    return [s + common for s in sizes]


def main():
    for name in ("yolo_head", "retinanet_head"):
        template = packaged_template(name)
        total = template.native_num_classes
        print(f"\n=== {name} (native {total} classes, input "
              f"{template.native_image_size}px) ===")
        print(f"baseline head: {template.params / 1e6:6.2f} M params, "
              f"{template.macs / 1e9:6.2f} GMACs")

        for branches in (2, 3, 4, 5):
            sizes = split_sizes(total, branches, common=8)
            plans = [
                compress_template(template, compression_factor(s, total), s)
                for s in sizes
            ]
            params = ", ".join(f"{p.params / 1e6:.1f}" for p in plans)
            macs = ", ".join(f"{p.macs / 1e9:.1f}" for p in plans)
            total_params = sum(p.params for p in plans)
            print(f"{branches} branches (served {sizes}):")
            print(f"    params (M): {params}   total {total_params / 1e6:.1f} "
                  f"({'+' if total_params > template.params else '-'}"
                  f"{abs(total_params / template.params - 1) * 100:.0f}% vs baseline)")
            print(f"    MACs  (G): {macs}")
        print("any single branch is far below the baseline head, so the")
        print("dynamic (per-inference) cost drops even when totals do not.")


if __name__ == "__main__":
    main()
