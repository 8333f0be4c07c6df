/* Locating a lazy-bound import slot from inside the running program,
 * the way an implant does it: walk the dynamic section for the
 * jump-slot relocation naming the wanted symbol. Taking the function's
 * address in C will not do; the compiler answers that with an
 * eagerly-bound indirection outside the jump-slot table.
 *
 * Only correct for fixed-address (no-PIE) binaries: d_ptr and r_offset
 * are used as absolute addresses, no rebasing.
 */
#ifndef FIXTURE_JUMPSLOT_H
#define FIXTURE_JUMPSLOT_H

#include <elf.h>
#include <link.h>
#include <stdint.h>
#include <string.h>

static uintptr_t *find_jump_slot(const char *name)
{
    const Elf64_Rela *rela = NULL;
    const Elf64_Sym *symtab = NULL;
    const char *strtab = NULL;
    size_t relasz = 0;

    for (const Elf64_Dyn *d = _DYNAMIC; d->d_tag != DT_NULL; d++) {
        if (d->d_tag == DT_JMPREL)
            rela = (const Elf64_Rela *)d->d_un.d_ptr;
        else if (d->d_tag == DT_PLTRELSZ)
            relasz = d->d_un.d_val;
        else if (d->d_tag == DT_SYMTAB)
            symtab = (const Elf64_Sym *)d->d_un.d_ptr;
        else if (d->d_tag == DT_STRTAB)
            strtab = (const char *)d->d_un.d_ptr;
    }
    if (!rela || !relasz || !symtab || !strtab)
        return 0;

    for (size_t i = 0; i < relasz / sizeof *rela; i++) {
        if (ELF64_R_TYPE(rela[i].r_info) != R_X86_64_JUMP_SLOT)
            continue;
        const Elf64_Sym *sym = symtab + ELF64_R_SYM(rela[i].r_info);
        if (strcmp(strtab + sym->st_name, name) == 0)
            return (uintptr_t *)rela[i].r_offset;
    }
    return 0;
}

#endif
