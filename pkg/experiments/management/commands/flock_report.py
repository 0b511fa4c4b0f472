from django.core.management.base import BaseCommand, CommandError

from core.exceptions import LabConfigError
from experiments.report import emit_report, report_status


class Command(BaseCommand):
    help = 'Собирает summary.txt по всем манифестам каталога результатов'

    def add_arguments(self, parser):
        parser.add_argument('directory', help='Каталог с прогонами экспериментов')

    def handle(self, *args, **options):
        directory = options['directory']
        try:
            target = emit_report(directory)
        except LabConfigError as e:
            raise CommandError(str(e), returncode=2) from e

        self.stdout.write(f'Сводка: {target}')
        if report_status(directory):
            raise CommandError('В сводке есть непройденные проверки', returncode=1)
        self.stdout.write(self.style.SUCCESS('Все проверки пройдены'))
